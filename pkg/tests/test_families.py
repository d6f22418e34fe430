import dataclasses

import numpy as np
import pytest

from pulsefam import families as fam
from pulsefam import systems as sy
from pulsefam.lindblad import IntegratorConfig
from pulsefam.optimize import OptimConfig
from pulsefam.pulses import ChannelSpec, PulseSet, shape_from_spec


FAST = IntegratorConfig(dt=5e-3)
TINY_OPT = OptimConfig(max_iters=4, restarts=1, seed=0)


# ---------------------------------------------------------------------------
# mock generator
# ---------------------------------------------------------------------------

def test_mock_frozen_walk_keeps_pulses_identical():
    cfg = fam.MockFamilyConfig(n_families=2, n_angles=6, drift_range=(0.0, 0.0),
                               volatility_range=(0.0, 0.0), seed=1)
    data = fam.generate_mock(cfg)
    for j in range(2):
        for i in range(1, 6):
            assert np.allclose(data.waveforms[j, i], data.waveforms[j, 0])


def test_mock_deterministic():
    cfg = fam.MockFamilyConfig(seed=3)
    a = fam.generate_mock(cfg)
    b = fam.generate_mock(cfg)
    assert np.array_equal(a.waveforms, b.waveforms)
    assert np.array_equal(a.truth, b.truth)


def test_mock_shapes():
    cfg = fam.MockFamilyConfig(n_families=3, n_angles=8, n_samples=50, seed=0)
    data = fam.generate_mock(cfg)
    assert data.waveforms.shape == (3, 8, 50)
    assert data.observed.shape == (8, 50)
    assert data.truth.shape == (8,)
    assert np.all((0 <= data.truth) & (data.truth < 3))
    for i in range(8):
        assert np.array_equal(data.observed[i], data.waveforms[data.truth[i], i])


def test_mock_walk_variance():
    # var(a_M - a_0) = sigma^2 (M-1) dtheta when mu = 0 and sigma is fixed
    sigma = 0.2
    cfg = fam.MockFamilyConfig(n_families=1, n_angles=5, n_gaussians=1,
                               drift_range=(0.0, 0.0),
                               volatility_range=(sigma, sigma), n_samples=8)
    diffs = []
    for seed in range(10000):
        data = fam.generate_mock(cfg, seed=seed)
        diffs.append(data.coefficients[0, -1, 0, 0] - data.coefficients[0, 0, 0, 0])
    expected = sigma ** 2 * 4 * cfg.dtheta
    assert np.var(diffs) == pytest.approx(expected, rel=0.05)


def test_compare_metrics_single_family():
    cfg = fam.MockFamilyConfig(n_families=1, n_angles=6, seed=2)
    out = fam.compare_metrics_experiment(cfg, 2)
    assert np.all(out["w2"] == 1.0)
    assert np.all(out["l2"] == 1.0)


def test_compare_metrics_degenerate_families_score_one():
    # frozen walks, well-separated families: both metrics recover the truth
    cfg = fam.MockFamilyConfig(n_families=3, n_angles=9, seed=5,
                               drift_range=(0.0, 0.0), volatility_range=(0.0, 0.0))
    out = fam.compare_metrics_experiment(cfg, 2)
    assert np.all(out["w2"] == 1.0)
    assert np.all(out["l2"] == 1.0)


# ---------------------------------------------------------------------------
# interpolation and ansatz construction
# ---------------------------------------------------------------------------

def _const_set(value, t_end=1.0):
    spec = ChannelSpec(-1.0, 1.0, 0.0)
    return PulseSet({"omega_01": shape_from_spec(spec, t_end, re=np.full(30, value)),
                     "delta_1": shape_from_spec(spec, t_end)}, t_end)


def _family(values_by_angle):
    members = {th: _const_set(v) for th, v in values_by_angle.items()}
    return fam.Family(id=0, members=members)


def test_interpolate_exact_member():
    f = _family({0.0: 0.1, 1.0: 0.5})
    out = fam.interpolate(f, 1.0)
    assert np.allclose(out.channels["omega_01"].re, 0.5)


def test_interpolate_identical_brackets():
    f = _family({0.0: 0.3, 1.0: 0.3})
    out = fam.interpolate(f, 0.4)
    assert np.allclose(out.channels["omega_01"].re, 0.3)


def test_interpolate_midpoint_average():
    f = _family({0.0: 0.2, 1.0: 0.6})
    out = fam.interpolate(f, 0.5)
    assert np.allclose(out.channels["omega_01"].re, 0.4)


def test_interpolate_no_extrapolation():
    f = _family({0.2: 0.1, 0.8: 0.5})
    with pytest.raises(ValueError):
        fam.interpolate(f, 0.9)


def test_interpolate_continuity():
    f = _family({0.0: 0.2, 1.0: 0.6})
    base = fam.interpolate(f, 0.5).channels["omega_01"].re
    for delta in (1e-3, 1e-5, 1e-7):
        moved = fam.interpolate(f, 0.5 + delta).channels["omega_01"].re
        assert np.max(np.abs(moved - base)) < 0.4 * delta / 1.0 + 1e-12


def test_ansatz_interior_gap_is_midpoint():
    f = _family({0.0: 0.2, 0.25: 0.3, 0.75: 0.7, 1.0: 0.8})
    ans = fam.ansatz_for_angle(f, 0.5)
    assert np.allclose(ans.channels["omega_01"].re, 0.5)


def test_ansatz_outside_range_uses_edge():
    f = _family({0.3: 0.25, 0.6: 0.5})
    low = fam.ansatz_for_angle(f, 0.1)
    high = fam.ansatz_for_angle(f, 0.9)
    assert np.allclose(low.channels["omega_01"].re, 0.25)
    assert np.allclose(high.channels["omega_01"].re, 0.5)


def test_extend_family_full_coverage_is_noop():
    angles = np.array([0.0, 0.5, 1.0])
    f = _family({0.0: 0.1, 0.5: 0.2, 1.0: 0.3})
    # model never touched when nothing is missing
    out = fam.extend_family(f, angles, model=None, gate="RX")
    assert sorted(out.members) == [0.0, 0.5, 1.0]
    assert all(v == "original" for v in out.provenance.values())
    assert np.allclose(out.members[0.5].channels["omega_01"].re, 0.2)


def test_extend_family_fills_missing_angles():
    m = sy.build_rydberg(sy.RydbergParams(), "RX")
    angles = np.linspace(0.0, np.pi, 4)
    members = {float(angles[0]): _const_set(0.2, m.gate_time),
               float(angles[2]): _const_set(0.4, m.gate_time)}
    f = fam.Family(id=1, members=members)
    out = fam.extend_family(f, angles, m, "RX", TINY_OPT, FAST)
    assert len(out.members) == 4
    assert out.provenance[float(angles[1])] == "extended"
    assert out.provenance[float(angles[3])] == "extended"
    assert float(angles[1]) in out.fidelities
    assert not out.failed_angles


def test_extend_family_empty_raises():
    with pytest.raises(ValueError):
        fam.extend_family(fam.Family(id=0, members={}), np.array([0.0]), None, "RX")


# ---------------------------------------------------------------------------
# gate library
# ---------------------------------------------------------------------------

def _grid_family(fid, values, angles):
    members = {float(t): _const_set(v) for t, v in zip(angles, values)}
    return fam.Family(id=fid, members=members)


def test_library_single_family_single_regime():
    angles = np.linspace(0, np.pi, 5)
    f = _grid_family(0, [0.1] * 5, angles)
    lib = fam.build_gate_library([f], None, "RX", angles,
                                 fidelity_fn=lambda ps, th: 0.9)
    assert lib.regimes == [(0.0, pytest.approx(np.pi), 0)]


def test_library_strictly_better_family_owns_everything():
    angles = np.linspace(0, np.pi, 5)
    fams = [_grid_family(0, [0.1] * 5, angles), _grid_family(1, [0.2] * 5, angles)]

    def fid(ps, theta):
        return 0.9 if np.allclose(ps.channels["omega_01"].re, 0.2) else 0.5

    lib = fam.build_gate_library(fams, None, "RX", angles, fidelity_fn=fid)
    assert len(lib.regimes) == 1
    assert lib.regimes[0][2] == 1


def test_library_partition_and_max_structure():
    angles = np.linspace(0, np.pi, 6)
    fams = [_grid_family(0, [0.1] * 6, angles), _grid_family(1, [0.2] * 6, angles)]

    def fid(ps, theta):
        fam0 = np.allclose(ps.channels["omega_01"].re, 0.1)
        base = 0.8 if theta < 1.5 else 0.6
        return base if fam0 else 1.0 - base

    lib = fam.build_gate_library(fams, None, "RX", angles, fidelity_fn=fid)
    # regimes partition [0, pi] with boundaries on grid angles
    assert lib.regimes[0][0] == 0.0
    assert lib.regimes[-1][1] == pytest.approx(np.pi)
    for (lo1, hi1, _), (lo2, hi2, _) in zip(lib.regimes, lib.regimes[1:]):
        assert hi1 == pytest.approx(lo2)
        assert any(abs(hi1 - a) < 1e-12 for a in angles)
    # partitioned fidelity is the per-midpoint max
    for mid, row in lib.midpoint_fidelities.items():
        owner = lib.family_for(mid)
        assert row[owner] == pytest.approx(max(row.values()))


def test_library_tie_goes_to_lower_id():
    angles = np.linspace(0, np.pi, 4)
    fams = [_grid_family(1, [0.1] * 4, angles), _grid_family(0, [0.2] * 4, angles)]
    lib = fam.build_gate_library(fams, None, "RX", angles,
                                 fidelity_fn=lambda ps, th: 0.7)
    assert all(r[2] == 0 for r in lib.regimes)


def test_library_needs_families():
    with pytest.raises(ValueError):
        fam.build_gate_library([], None, "RX", np.linspace(0, np.pi, 4))


def test_infidelity_normalization():
    assert fam.infidelity(1.0, 1.0) == 0.0
    assert fam.infidelity(17 / 21, 17 / 21) == pytest.approx(0.0)
    assert fam.infidelity(0.5 * 17 / 21, 17 / 21) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# pipeline smoke
# ---------------------------------------------------------------------------

def test_full_pipeline_smoke():
    m = sy.build_rydberg(sy.RydbergParams(gamma_1=0.0, gamma_r=0.0), "RZ")
    cfg = fam.PipelineConfig(
        seed=1,
        k_families=2,
        optimizer=OptimConfig(max_iters=5, restarts=1, seed=1),
        integrator=FAST,
    )
    res = fam.full_pipeline(m, "RZ", 4, cfg)
    assert res.angles.size == 4
    assert len(res.results) == 4
    assert res.distances.shape == (4, 4)
    assert len(res.families) == res.labels.k
    methods = {row["method"] for row in res.report}
    assert "original" in methods and "partitioned" in methods
    # partitioned is the per-midpoint max by construction
    part = [r for r in res.report if r["method"] == "partitioned"][0]
    for r in res.report:
        if r["method"].startswith("family-"):
            assert part["mean_infidelity"] <= r["mean_infidelity"] + 1e-12
    # regimes partition the angle range
    assert res.library.regimes[0][0] == 0.0
    assert res.library.regimes[-1][1] == pytest.approx(np.pi)


def test_full_pipeline_validates_m():
    m = sy.build_rydberg(sy.RydbergParams(), "RZ")
    with pytest.raises(ValueError):
        fam.full_pipeline(m, "RZ", 3, fam.PipelineConfig())
