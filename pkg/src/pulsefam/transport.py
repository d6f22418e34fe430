"""Pulse distance functions: pointwise L2 and optimal-transport W2.

The L2 dissimilarity is the time integral of the squared pointwise
difference (the squared-L2 functional, used as printed). It is blind to
time shifts once pulses stop overlapping.

The Wasserstein-2 distance treats a pulse as a uniform measure on its
graph in the time-amplitude plane: the curve is resampled at equal
arc-length spacing into a point cloud, and the entropically regularized
transport problem between two clouds is solved by Sinkhorn-Knopp in the
log domain with a regularization halving schedule. An exact
linear-programming solver over the coupling polytope serves as the
small-instance oracle.

Time and amplitude carry different units, so curves are normalized
before transport: time to [0, 1], amplitude by a scale (the channel
bound width for pulse sets), with a configurable anisotropy ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog

from .pulses import PulseSet, ShapingConfig, render, time_grid


@dataclass(frozen=True)
class Normalization:
    """Maps a raw curve (t, y) to the transport plane."""

    t_end: float = 1.0
    amp_scale: float = 1.0
    anisotropy: float = 1.0

    def apply(self, values: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return times / self.t_end, self.anisotropy * values / self.amp_scale


@dataclass(frozen=True)
class TransportConfig:
    cloud_points: int = 64
    reg: float = 1e-3
    schedule_stages: int = 4
    max_iters: int = 5000
    #: marginal-violation target; distance use only needs 1e-4, plans
    #: returned through sinkhorn_w2 tighten this to their own tolerance
    tol: float = 1e-4
    anisotropy: float = 1.0
    debias: bool = False

    def __post_init__(self):
        if self.reg <= 0 or self.tol <= 0:
            raise ValueError("reg and tol must be positive")
        if self.cloud_points < 2:
            raise ValueError("cloud_points must be >= 2")
        if self.schedule_stages < 1 or self.max_iters < 1:
            raise ValueError("schedule_stages and max_iters must be >= 1")


@dataclass
class PointCloud:
    """Weighted points in the time-amplitude plane."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError(f"points must be (n, 2), got {self.points.shape}")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("weights must match the number of points")
        if np.any(self.weights < 0) or not np.isfinite(self.points).all():
            raise ValueError("weights must be nonnegative and points finite")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total}")


@dataclass
class TransportPlan:
    """A coupling between two point clouds (marginals within 1e-6)."""

    coupling: np.ndarray

    def marginal_violation(self, source: np.ndarray, target: np.ndarray) -> float:
        row = np.abs(self.coupling.sum(axis=1) - source).max()
        col = np.abs(self.coupling.sum(axis=0) - target).max()
        return float(max(row, col))


class SinkhornConvergenceError(RuntimeError):
    pass


#: over-relaxation factor on the scaling updates; 1 < omega < 2 keeps the
#: fixed point and speeds up the small-reg regime considerably
_OMEGA = 1.5


# ---------------------------------------------------------------------------
# L2 and curve geometry
# ---------------------------------------------------------------------------

def l2_distance(z1: np.ndarray, z2: np.ndarray, times: np.ndarray) -> float:
    """Integral of |z1 - z2|^2 over the shared time grid (trapezoid rule)."""
    z1 = np.asarray(z1)
    z2 = np.asarray(z2)
    times = np.asarray(times, dtype=float)
    if z1.shape != z2.shape or z1.shape != times.shape:
        raise ValueError("waveforms must share one grid")
    return float(np.trapezoid(np.abs(z1 - z2) ** 2, times))


def curve_length(values: np.ndarray, times: np.ndarray,
                 norm: Normalization = Normalization()) -> float:
    """Arc length of the normalized curve (t, z(t))."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.size < 2:
        raise ValueError("need at least 2 samples")
    x, y = norm.apply(values, times)
    return float(np.sum(np.hypot(np.diff(x), np.diff(y))))


def curve_point_cloud(values: np.ndarray, times: np.ndarray, n_points: int,
                      norm: Normalization = Normalization()) -> PointCloud:
    """Resample the normalized curve at equal arc-length spacing.

    Returns ``n_points`` uniformly weighted points. A degenerate
    zero-length curve collapses to one repeated point.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    x, y = norm.apply(values, times)
    seg = np.hypot(np.diff(x), np.diff(y))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    weights = np.full(n_points, 1.0 / n_points)
    if cum[-1] < 1e-12:
        pts = np.repeat([[x[0], y[0]]], n_points, axis=0)
        return PointCloud(pts, weights)
    s = np.linspace(0.0, cum[-1], n_points)
    pts = np.stack([np.interp(s, cum, x), np.interp(s, cum, y)], axis=1)
    return PointCloud(pts, weights)


# ---------------------------------------------------------------------------
# entropic optimal transport
# ---------------------------------------------------------------------------

def _cost_matrix(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    diff = p1[:, None, :] - p2[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _sinkhorn_log_batch(cost: np.ndarray, loga: np.ndarray, logb: np.ndarray,
                        cfg: TransportConfig) -> tuple[np.ndarray, float]:
    """Log-domain scaling on a (B, n, m) batch of cost matrices.

    Returns the couplings and the worst final marginal violation. The
    regularization follows a halving schedule ending at ``cfg.reg``,
    warm-starting the potentials between stages; pre-final stages only
    need a loose tolerance. Converged batch items drop out of the
    iteration, so one slow pair does not make every pair pay.
    """
    batch, n, m = cost.shape
    f = np.zeros((batch, n))
    g = np.zeros((batch, m))
    a = np.exp(loga)
    err = np.full(batch, np.inf)

    def f_update(g_act, cost_act, logb_act, reg):
        return -reg * _logsumexp((g_act[:, None, :] - cost_act) / reg
                                 + logb_act[:, None, :], axis=2)

    def g_update(f_act, cost_act, loga_act, reg):
        return -reg * _logsumexp((f_act[:, :, None] - cost_act) / reg
                                 + loga_act[:, :, None], axis=1)

    for stage in range(cfg.schedule_stages):
        reg = cfg.reg * 2.0 ** (cfg.schedule_stages - 1 - stage)
        last = stage == cfg.schedule_stages - 1
        tol = cfg.tol if last else max(cfg.tol, 1e-4)
        idx = np.arange(batch)
        f = f_update(g, cost, logb, reg)
        for _ in range(cfg.max_iters):
            g_next = g_update(f[idx], cost[idx], loga[idx], reg)
            g[idx] = (1.0 - _OMEGA) * g[idx] + _OMEGA * g_next
            f_next = f_update(g[idx], cost[idx], logb[idx], reg)
            # row marginal of the plan built from (f, g):
            # sum_j plan_ij = a_i exp((f_i - f_next_i) / reg)
            expo = np.minimum((f[idx] - f_next) / reg, 50.0)
            err[idx] = np.max(np.abs(a[idx] * (np.exp(expo) - 1.0)), axis=1)
            f[idx] = (1.0 - _OMEGA) * f[idx] + _OMEGA * f_next
            idx = idx[err[idx] >= tol]
            if idx.size == 0:
                break
        if last:
            # plain closing update: exact row marginals for the returned plan
            f = f_update(g, cost, logb, reg)
        if last and np.max(err) > 10.0 * cfg.tol:
            raise SinkhornConvergenceError(
                f"Sinkhorn marginal violation {np.max(err):.2e} after {cfg.max_iters} "
                f"iterations; increase reg (currently {cfg.reg:g}) or max_iters")
    plan = np.exp((f[:, :, None] + g[:, None, :] - cost) / cfg.reg
                  + loga[:, :, None] + logb[:, None, :])
    return plan, float(np.max(err))


def _transport_cost(c1: PointCloud, c2: PointCloud, cfg: TransportConfig) -> tuple[float, np.ndarray]:
    cost = _cost_matrix(c1.points, c2.points)[None]
    with np.errstate(divide="ignore"):
        loga = np.log(c1.weights)[None]
        logb = np.log(c2.weights)[None]
    plan, _ = _sinkhorn_log_batch(cost, loga, logb, cfg)
    return float(np.sum(plan[0] * cost[0])), plan[0]


def sinkhorn_w2(c1: PointCloud, c2: PointCloud, reg: float = 1e-3,
                max_iters: int = 5000, tol: float = 1e-6,
                schedule_stages: int = 4, debias: bool = False) -> tuple[float, TransportPlan]:
    """Entropic W2 between two point clouds.

    Returns sqrt of the coupling cost and the coupling itself. With
    ``debias=True`` the self-transport costs are subtracted before the
    square root (Sinkhorn divergence), removing most of the entropic
    floor; off by default.
    """
    cfg = TransportConfig(reg=reg, max_iters=max_iters, tol=tol,
                          schedule_stages=schedule_stages, debias=debias)
    # canonical argument order makes the iterative solve exactly symmetric
    key1 = (c1.points.shape[0], c1.points.tobytes(), c1.weights.tobytes())
    key2 = (c2.points.shape[0], c2.points.tobytes(), c2.weights.tobytes())
    swapped = key2 < key1
    first, second = (c2, c1) if swapped else (c1, c2)
    raw, plan = _transport_cost(first, second, cfg)
    if debias:
        aa, _ = _transport_cost(first, first, cfg)
        bb, _ = _transport_cost(second, second, cfg)
        raw = raw - 0.5 * (aa + bb)
    if swapped:
        plan = plan.T
    return float(np.sqrt(max(raw, 0.0))), TransportPlan(plan)


def exact_w2_small(c1: PointCloud, c2: PointCloud) -> float:
    """Exact W2 by linear programming over the coupling polytope.

    Small instances only (n, m <= 32); this is the oracle the Sinkhorn
    route is validated against, solved with the HiGHS simplex/IPM on the
    flow formulation of the transport problem.
    """
    n, m = c1.points.shape[0], c2.points.shape[0]
    if n > 32 or m > 32:
        raise ValueError(f"exact solver limited to 32 points, got {n}x{m}")
    cost = _cost_matrix(c1.points, c2.points)
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([c1.weights, c2.weights])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"exact transport LP failed: {res.message}")
    return float(np.sqrt(max(res.fun, 0.0)))


# ---------------------------------------------------------------------------
# distances between pulse sets and waveform collections
# ---------------------------------------------------------------------------

def _channel_curves(values: np.ndarray) -> list[np.ndarray]:
    # complex channels contribute their real and imaginary parts as
    # separate curves, combined in quadrature downstream
    if np.iscomplexobj(values):
        return [values.real, values.imag]
    return [np.asarray(values, dtype=float)]


def _w2_waveforms(z1: np.ndarray, z2: np.ndarray, times: np.ndarray,
                  norm: Normalization, cfg: TransportConfig) -> float:
    total = 0.0
    for a, b in zip(_channel_curves(z1), _channel_curves(z2)):
        ca = curve_point_cloud(a, times, cfg.cloud_points, norm)
        cb = curve_point_cloud(b, times, cfg.cloud_points, norm)
        dist, _ = sinkhorn_w2(ca, cb, reg=cfg.reg, max_iters=cfg.max_iters,
                              tol=cfg.tol, schedule_stages=cfg.schedule_stages,
                              debias=cfg.debias)
        total += dist * dist
    return float(np.sqrt(total))


def pulse_set_distance(p1: PulseSet, p2: PulseSet, metric: str = "w2",
                       cfg: TransportConfig = TransportConfig(),
                       shaping: ShapingConfig = ShapingConfig()) -> float:
    """Distance between two pulse sets: per-channel distances in quadrature."""
    if set(p1.channels) != set(p2.channels):
        raise ValueError("pulse sets have different channel sets")
    if abs(p1.t_end - p2.t_end) > 1e-12:
        raise ValueError("pulse sets have different durations")
    times = time_grid(p1.t_end, shaping)
    total = 0.0
    for name in p1.channels:
        s1, s2 = p1.channels[name], p2.channels[name]
        z1, z2 = render(s1, shaping), render(s2, shaping)
        if metric == "l2":
            d = l2_distance(z1, z2, times)
        elif metric == "w2":
            norm = Normalization(t_end=p1.t_end,
                                 amp_scale=max(s1.upper - s1.lower, 1e-12),
                                 anisotropy=cfg.anisotropy)
            d = _w2_waveforms(z1, z2, times, norm, cfg)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        total += d * d
    return float(np.sqrt(total))


def waveform_distance_matrix(waveforms: np.ndarray, times: np.ndarray,
                             metric: str = "w2",
                             cfg: TransportConfig = TransportConfig(),
                             norm: Normalization | None = None) -> np.ndarray:
    """Pairwise distances between M single-channel waveforms.

    The W2 branch batches every pair into one Sinkhorn solve. The
    diagonal is 0 by the metric axioms; only the upper triangle is
    computed.
    """
    z = np.asarray(waveforms, dtype=float)
    if z.ndim != 2:
        raise ValueError("waveforms must be (M, L)")
    m_count = z.shape[0]
    if norm is None:
        norm = Normalization(t_end=float(times[-1]), amp_scale=1.0,
                             anisotropy=cfg.anisotropy)
    out = np.zeros((m_count, m_count))
    pairs = [(i, j) for i in range(m_count) for j in range(i + 1, m_count)]
    if not pairs:
        return out

    if metric == "l2":
        for i, j in pairs:
            out[i, j] = out[j, i] = l2_distance(z[i], z[j], times)
        return out
    if metric != "w2":
        raise ValueError(f"unknown metric {metric!r}")

    clouds = [curve_point_cloud(z[i], times, cfg.cloud_points, norm) for i in range(m_count)]
    cost = np.stack([_cost_matrix(clouds[i].points, clouds[j].points) for i, j in pairs])
    with np.errstate(divide="ignore"):
        loga = np.stack([np.log(clouds[i].weights) for i, _ in pairs])
        logb = np.stack([np.log(clouds[j].weights) for _, j in pairs])
    plans, _ = _sinkhorn_log_batch(cost, loga, logb, cfg)
    costs = np.sum(plans * cost, axis=(1, 2))
    if cfg.debias:
        self_cost = np.stack([_cost_matrix(c.points, c.points) for c in clouds])
        with np.errstate(divide="ignore"):
            logw = np.stack([np.log(c.weights) for c in clouds])
        self_plans, _ = _sinkhorn_log_batch(self_cost, logw, logw, cfg)
        selfs = np.sum(self_plans * self_cost, axis=(1, 2))
        costs = costs - 0.5 * (selfs[[i for i, _ in pairs]] + selfs[[j for _, j in pairs]])
    dists = np.sqrt(np.maximum(costs, 0.0))
    for (i, j), d in zip(pairs, dists):
        out[i, j] = out[j, i] = d
    return out


def pulse_set_distance_matrix(pulsesets: list[PulseSet], metric: str = "w2",
                              cfg: TransportConfig = TransportConfig(),
                              shaping: ShapingConfig = ShapingConfig()) -> np.ndarray:
    """Pairwise distances between M pulse sets (quadrature over channels)."""
    m_count = len(pulsesets)
    if m_count < 2:
        return np.zeros((m_count, m_count))
    names = list(pulsesets[0].channels)
    t_end = pulsesets[0].t_end
    times = time_grid(t_end, shaping)
    total_sq = np.zeros((m_count, m_count))
    for name in names:
        shapes = [p.channels[name] for p in pulsesets]
        spec = shapes[0].spec
        rendered = np.stack([render(s, shaping) for s in shapes])
        if metric == "l2":
            d = np.zeros((m_count, m_count))
            for i in range(m_count):
                for j in range(i + 1, m_count):
                    d[i, j] = d[j, i] = l2_distance(rendered[i], rendered[j], times)
            total_sq += d * d
        elif metric == "w2":
            norm = Normalization(t_end=t_end, amp_scale=max(spec.upper - spec.lower, 1e-12),
                                 anisotropy=cfg.anisotropy)
            curves = [rendered.real, rendered.imag] if np.iscomplexobj(rendered) else [rendered]
            for z in curves:
                d = waveform_distance_matrix(z, times, "w2", cfg, norm=norm)
                total_sq += d * d
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return np.sqrt(total_sq)
