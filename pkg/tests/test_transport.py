import numpy as np
import pytest

from pulsefam import transport as tp
from pulsefam.pulses import ChannelSpec, PulseSet, ShapingConfig, shape_from_spec


def _cloud(points, weights=None):
    points = np.asarray(points, dtype=float)
    if weights is None:
        weights = np.full(len(points), 1.0 / len(points))
    return tp.PointCloud(points, weights)


# ---------------------------------------------------------------------------
# L2
# ---------------------------------------------------------------------------

def test_l2_self_zero():
    t = np.linspace(0, 1, 101)
    z = np.sin(3 * t)
    assert tp.l2_distance(z, z, t) == 0.0


def test_l2_unit_boxcar():
    t = np.linspace(0, 1, 101)
    assert tp.l2_distance(np.ones_like(t), np.zeros_like(t), t) == pytest.approx(1.0)


def test_l2_disjoint_boxcars_shift_blind():
    # two disjoint unit boxcars of width w integrate to 2w wherever they sit
    t = np.linspace(0, 1, 1001)
    dt = t[1] - t[0]

    def box(lo, w):
        z = np.zeros_like(t)
        z[(t >= lo) & (t < lo + w)] = 1.0
        return z

    w = 0.1
    d_near = tp.l2_distance(box(0.1, w), box(0.25, w), t)
    d_far = tp.l2_distance(box(0.1, w), box(0.8, w), t)
    assert d_near == pytest.approx(2 * w, abs=3 * dt)
    assert d_far == pytest.approx(d_near, abs=1e-12)


def test_l2_grid_mismatch():
    with pytest.raises(ValueError):
        tp.l2_distance(np.zeros(4), np.zeros(5), np.linspace(0, 1, 4))


# ---------------------------------------------------------------------------
# curve geometry
# ---------------------------------------------------------------------------

def test_curve_length_flat():
    t = np.linspace(0, 1, 101)
    assert tp.curve_length(np.zeros_like(t), t) == pytest.approx(1.0)


def test_curve_length_ramp():
    t = np.linspace(0, 1, 101)
    assert tp.curve_length(t.copy(), t) == pytest.approx(np.sqrt(2.0))


def test_curve_length_refinement():
    rng = np.random.default_rng(0)
    steps = rng.uniform(-1, 1, 10)
    t_coarse = np.linspace(0, 1, 201)
    t_fine = np.linspace(0, 1, 2001)
    z_coarse = steps[np.minimum((t_coarse * 10).astype(int), 9)]
    z_fine = steps[np.minimum((t_fine * 10).astype(int), 9)]
    l1 = tp.curve_length(z_coarse, t_coarse)
    l2 = tp.curve_length(z_fine, t_fine)
    assert abs(l1 - l2) / l2 < 0.01


def test_point_cloud_straight_segment():
    t = np.linspace(0, 1, 11)
    cloud = tp.curve_point_cloud(np.zeros_like(t), t, 3)
    assert np.allclose(cloud.points[:, 0], [0.0, 0.5, 1.0])
    assert np.allclose(cloud.weights, 1 / 3)


def test_point_cloud_weights_sum():
    t = np.linspace(0, 1, 101)
    cloud = tp.curve_point_cloud(np.sin(5 * t), t, 17)
    assert cloud.weights.sum() == pytest.approx(1.0)


def test_point_cloud_equal_arc_spacing():
    t = np.linspace(0, 1, 2001)
    z = 0.8 * np.sin(6 * t)
    cloud = tp.curve_point_cloud(z, t, 32)
    # oracle: arc length between consecutive cloud points along the fine curve
    x, y = t, 0.8 * np.sin(6 * t)
    cum = np.concatenate([[0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))])
    pos = np.searchsorted(x, cloud.points[:, 0])
    arcs = np.diff(cum[pos])
    assert np.max(np.abs(arcs - arcs.mean())) < 1e-3 * cum[-1] + 1e-3


def test_point_cloud_degenerate():
    t = np.zeros(5)
    cloud = tp.curve_point_cloud(np.zeros(5), t, 4)
    assert np.allclose(cloud.points, cloud.points[0])
    assert np.allclose(cloud.weights, 0.25)


# ---------------------------------------------------------------------------
# Sinkhorn and the exact oracle
# ---------------------------------------------------------------------------

def test_sinkhorn_single_points():
    c1 = _cloud([[0.0, 0.0]])
    c2 = _cloud([[0.3, 0.4]])
    d, plan = tp.sinkhorn_w2(c1, c2)
    assert d == pytest.approx(0.5, abs=1e-6)
    assert plan.coupling == pytest.approx(np.array([[1.0]]), abs=1e-9)


def test_sinkhorn_identical_clouds_floor():
    t = np.linspace(0, 1, 64)
    cloud = _cloud(np.stack([t, np.sin(3 * t)], axis=1))
    d, _ = tp.sinkhorn_w2(cloud, cloud)
    assert d < 2 * np.sqrt(1e-3)


def test_sinkhorn_plan_marginals():
    rng = np.random.default_rng(1)
    c1 = _cloud(rng.uniform(0, 1, (12, 2)))
    c2 = _cloud(rng.uniform(0, 1, (12, 2)))
    _, plan = tp.sinkhorn_w2(c1, c2)
    assert plan.marginal_violation(c1.weights, c2.weights) < 1e-6


def test_exact_single_points():
    assert tp.exact_w2_small(_cloud([[0, 0]]), _cloud([[0.3, 0.4]])) == pytest.approx(0.5)


def test_exact_two_point_swap():
    # two symmetric points force the cross matching: cost = distance
    c1 = _cloud([[0.0, 0.0], [1.0, 0.0]])
    c2 = _cloud([[0.0, 1.0], [1.0, 1.0]])
    assert tp.exact_w2_small(c1, c2) == pytest.approx(1.0)


def test_exact_size_limit():
    pts = np.zeros((40, 2))
    with pytest.raises(ValueError):
        tp.exact_w2_small(_cloud(pts), _cloud(pts))


def test_sinkhorn_matches_exact_8pt():
    for trial in range(10):
        rng = np.random.default_rng(500 + trial)
        c1 = _cloud(rng.uniform(0, 1, (8, 2)))
        c2 = _cloud(rng.uniform(0, 1, (8, 2)))
        ds, _ = tp.sinkhorn_w2(c1, c2)
        de = tp.exact_w2_small(c1, c2)
        assert abs(ds - de) / de < 0.02


def test_w2_shift_monotone_l2_blind():
    t = np.linspace(0, 1, 401)

    def box(lo, w=0.08):
        z = np.zeros_like(t)
        z[(t >= lo) & (t < lo + w)] = 1.0
        return z

    z0, z1, z2 = box(0.1), box(0.35), box(0.8)
    assert tp.l2_distance(z0, z1, t) == pytest.approx(tp.l2_distance(z0, z2, t))
    c0, c1, c2 = (tp.curve_point_cloud(z, t, 16) for z in (z0, z1, z2))
    d01, _ = tp.sinkhorn_w2(c0, c1)
    d02, _ = tp.sinkhorn_w2(c0, c2)
    assert d01 < d02
    # agreement with the exact oracle on the same clouds
    assert abs(d01 - tp.exact_w2_small(c0, c1)) / tp.exact_w2_small(c0, c1) < 0.02
    assert abs(d02 - tp.exact_w2_small(c0, c2)) / tp.exact_w2_small(c0, c2) < 0.02


def test_metric_symmetry():
    t = np.linspace(0, 1, 201)
    z1 = np.sin(4 * t)
    z2 = np.cos(2 * t) * 0.5
    assert tp.l2_distance(z1, z2, t) == pytest.approx(tp.l2_distance(z2, z1, t), abs=1e-9)
    c1 = tp.curve_point_cloud(z1, t, 24)
    c2 = tp.curve_point_cloud(z2, t, 24)
    d12, _ = tp.sinkhorn_w2(c1, c2)
    d21, _ = tp.sinkhorn_w2(c2, c1)
    assert d12 == pytest.approx(d21, abs=1e-9)


def test_exact_triangle_inequality():
    for trial in range(100):
        rng = np.random.default_rng(2000 + trial)
        a, b, c = (_cloud(rng.uniform(0, 1, (6, 2))) for _ in range(3))
        dab = tp.exact_w2_small(a, b)
        dbc = tp.exact_w2_small(b, c)
        dac = tp.exact_w2_small(a, c)
        assert dac <= dab + dbc + 1e-9


def test_sinkhorn_error_advises_larger_reg():
    rng = np.random.default_rng(3)
    c1 = _cloud(rng.uniform(0, 5, (32, 2)))
    c2 = _cloud(rng.uniform(0, 5, (32, 2)))
    with pytest.raises(tp.SinkhornConvergenceError, match="reg"):
        tp.sinkhorn_w2(c1, c2, reg=1e-6, max_iters=3, tol=1e-12)


# ---------------------------------------------------------------------------
# pulse set distances
# ---------------------------------------------------------------------------

def _two_channel_sets():
    table = {"a": ChannelSpec(-1, 1), "b": ChannelSpec(-1, 1)}
    rng = np.random.default_rng(4)
    p1 = PulseSet({n: shape_from_spec(s, 1.0, re=rng.uniform(-0.5, 0.5, 30))
                   for n, s in table.items()}, 1.0)
    p2 = PulseSet({n: shape_from_spec(s, 1.0, re=rng.uniform(-0.5, 0.5, 30))
                   for n, s in table.items()}, 1.0)
    return table, p1, p2


def test_pulse_set_distance_self():
    _, p1, _ = _two_channel_sets()
    assert tp.pulse_set_distance(p1, p1, "l2") == 0.0
    floor = tp.pulse_set_distance(p1, p1, "w2")
    assert floor < np.sqrt(2.0) * 2 * np.sqrt(1e-3)


def test_pulse_set_distance_channel_quadrature():
    table, p1, p2 = _two_channel_sets()
    full = tp.pulse_set_distance(p1, p2, "l2")
    parts = []
    for name in table:
        pa = PulseSet({name: p1.channels[name]}, 1.0)
        pb = PulseSet({name: p2.channels[name]}, 1.0)
        parts.append(tp.pulse_set_distance(pa, pb, "l2"))
    assert full == pytest.approx(np.sqrt(sum(d * d for d in parts)), rel=1e-9)
    # single-channel set equals the channel distance itself
    assert parts[0] > 0


def test_pulse_set_distance_mismatch():
    table, p1, _ = _two_channel_sets()
    other = PulseSet({"a": p1.channels["a"]}, 1.0)
    with pytest.raises(ValueError):
        tp.pulse_set_distance(p1, other, "l2")


def test_distance_matrix_consistency():
    _, p1, p2 = _two_channel_sets()
    mat = tp.pulse_set_distance_matrix([p1, p2], "w2")
    direct = tp.pulse_set_distance(p1, p2, "w2")
    # both routes approximate the same W2 to solver tolerance
    assert mat[0, 1] == pytest.approx(direct, rel=1e-3)
    assert mat[0, 0] == 0.0 and mat[1, 0] == mat[0, 1]
