"""Gradient-ascent pulse optimization of the average gate fidelity.

The search space is the flattened vector of 30 segment values per active
channel (60 per complex channel). Gradients are numerical - central
differences by default, a seeded simultaneous-perturbation estimate for
large parameter counts - and every evaluation in a gradient goes through
one batched master-equation solve. Updates use the adaptive-moment
(Adam) rule with projection onto the channel bounds after every step;
the returned iterate is the best one seen, so the reported trajectory is
non-decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lindblad import IntegratorConfig, fidelity_of_rendered
from .pulses import (N_SEGMENTS, ChannelSpec, PulseSet, ShapingConfig, clamp_set,
                     random_pulse_set, render_segments, shape_from_spec)
from .systems import SystemModel


@dataclass(frozen=True)
class OptimConfig:
    max_iters: int = 300
    learning_rate: float = 0.02
    grad_step: float = 1e-3
    tolerance: float = 1e-6
    restarts: int = 3
    seed: int = 0
    grad_mode: str = "central"
    #: iterations without relative improvement > tolerance before stopping
    patience: int = 20
    #: random-start segment amplitude as a fraction of the channel bounds
    init_scale: float = 0.8
    #: ansatz-perturbation scale in units of (upper - lower)
    perturb_scale: float = 0.05

    def __post_init__(self):
        if min(self.max_iters, self.restarts, self.patience) < 1:
            raise ValueError("max_iters, restarts and patience must be >= 1")
        if min(self.learning_rate, self.grad_step, self.tolerance) <= 0:
            raise ValueError("learning_rate, grad_step and tolerance must be positive")
        if self.grad_mode not in ("central", "spsa"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")


@dataclass
class OptimResult:
    pulses: PulseSet
    fidelity: float
    iterations: int
    trajectory: np.ndarray
    ansatz_id: str = ""
    restart_index: int = 0


def finite_diff_gradient(objective, params: np.ndarray, h: float,
                         mode: str = "central", rng: np.random.Generator | None = None,
                         vectorized: bool = False) -> np.ndarray:
    """Numerical gradient of a scalar objective at ``params``.

    ``mode="central"`` evaluates (f(x + h e_i) - f(x - h e_i)) / 2h per
    coordinate. ``mode="spsa"`` draws one seeded +-1 perturbation and
    returns the rank-1 simultaneous-perturbation estimate, useful when
    evaluations are expensive and the parameter count is large.
    ``vectorized`` objectives take an (n, p) array and return (n,).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(params, dtype=float)

    if mode == "spsa":
        if rng is None:
            raise ValueError("spsa mode needs an rng for the perturbation draw")
        delta = rng.choice(np.array([-1.0, 1.0]), size=x.shape)
        points = np.stack([x + h * delta, x - h * delta])
        vals = np.asarray(objective(points)) if vectorized else \
            np.array([objective(points[0]), objective(points[1])])
        if not np.all(np.isfinite(vals)):
            raise ValueError("objective returned a non-finite value")
        return (vals[0] - vals[1]) / (2.0 * h) * delta

    if mode != "central":
        raise ValueError(f"unknown gradient mode {mode!r}")
    p = x.size
    points = np.repeat(x[None], 2 * p, axis=0)
    idx = np.arange(p)
    points[2 * idx, idx] += h
    points[2 * idx + 1, idx] -= h
    if vectorized:
        vals = np.asarray(objective(points))
    else:
        vals = np.array([objective(pt) for pt in points])
    if not np.all(np.isfinite(vals)):
        raise ValueError("objective returned a non-finite value")
    return (vals[0::2] - vals[1::2]) / (2.0 * h)


# ---------------------------------------------------------------------------
# parameter packing
# ---------------------------------------------------------------------------

def _param_layout(table: dict[str, ChannelSpec]) -> list[tuple[str, slice, slice | None]]:
    """Per-channel slices of the flat parameter vector (re, then im)."""
    layout = []
    offset = 0
    for name, spec in table.items():
        re_sl = slice(offset, offset + N_SEGMENTS)
        offset += N_SEGMENTS
        im_sl = None
        if spec.complex_allowed:
            im_sl = slice(offset, offset + N_SEGMENTS)
            offset += N_SEGMENTS
        layout.append((name, re_sl, im_sl))
    return layout


def n_params(table: dict[str, ChannelSpec]) -> int:
    return sum(N_SEGMENTS * (2 if s.complex_allowed else 1) for s in table.values())


def pack_pulses(pulses: PulseSet, table: dict[str, ChannelSpec]) -> np.ndarray:
    x = np.empty(n_params(table))
    for name, re_sl, im_sl in _param_layout(table):
        shape = pulses.channels[name]
        x[re_sl] = shape.re
        if im_sl is not None:
            x[im_sl] = np.zeros(N_SEGMENTS) if shape.im is None else shape.im
    return x


def unpack_params(x: np.ndarray, table: dict[str, ChannelSpec], t_end: float) -> PulseSet:
    channels = {}
    for name, re_sl, im_sl in _param_layout(table):
        spec = table[name]
        channels[name] = shape_from_spec(
            spec, t_end, re=x[re_sl], im=None if im_sl is None else x[im_sl])
    return PulseSet(channels, t_end)


def _clamp_params(x: np.ndarray, table: dict[str, ChannelSpec]) -> np.ndarray:
    out = x.copy()
    for name, re_sl, im_sl in _param_layout(table):
        spec = table[name]
        if im_sl is None:
            out[re_sl] = np.clip(x[re_sl], spec.lower, spec.upper)
        else:
            vals = x[re_sl] + 1j * x[im_sl]
            mag = np.abs(vals)
            over = mag > spec.upper
            if np.any(over):
                vals = np.where(over, vals * (spec.upper / np.where(over, mag, 1.0)), vals)
            out[re_sl] = vals.real
            out[im_sl] = vals.imag
    return out


def render_param_batch(params: np.ndarray, table: dict[str, ChannelSpec],
                       shaping: ShapingConfig) -> np.ndarray:
    """Render a (B, P) parameter batch to (B, C, L) waveform values."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    batch = params.shape[0]
    out = np.empty((batch, len(table), shaping.n_samples), dtype=complex)
    for c, (name, re_sl, im_sl) in enumerate(_param_layout(table)):
        spec = table[name]
        segs = params[:, re_sl].astype(complex)
        if im_sl is not None:
            segs = segs + 1j * params[:, im_sl]
        out[:, c] = render_segments(segs, spec.endpoint_value, spec.lower, spec.upper,
                                    spec.complex_allowed, shaping)
    return out


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

class OptimizationError(RuntimeError):
    """Every restart diverged to a non-finite objective."""


def _perturbation(rng: np.random.Generator, table: dict[str, ChannelSpec],
                  scale: float) -> np.ndarray:
    noise = np.empty(n_params(table))
    for name, re_sl, im_sl in _param_layout(table):
        spec = table[name]
        width = scale * (spec.upper - spec.lower)
        noise[re_sl] = rng.normal(0.0, width, N_SEGMENTS)
        if im_sl is not None:
            noise[im_sl] = rng.normal(0.0, width, N_SEGMENTS)
    return noise


def optimize_gate(model: SystemModel, gate: str, theta: float,
                  ansatz: PulseSet | None = None,
                  cfg: OptimConfig = OptimConfig(),
                  integrator: IntegratorConfig = IntegratorConfig(),
                  shaping: ShapingConfig = ShapingConfig(),
                  t_end: float | None = None,
                  ansatz_id: str = "") -> OptimResult:
    """Maximize the gate fidelity over shaped pulse segments.

    Restart 1 starts from the ansatz when one is given (random segments
    otherwise); later restarts perturb the ansatz with seeded noise. The
    best iterate across restarts is returned, with its fidelity taken
    from a fresh evaluation of the returned pulse set.
    """
    if not 0.0 <= theta <= np.pi + 1e-12:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    table = model.channel_table
    if ansatz is not None:
        missing = [n for n in table if n not in ansatz.channels]
        if missing:
            raise ValueError(f"ansatz lacks channels {missing}")
        t_end = ansatz.t_end if t_end is None else t_end
    duration = model.gate_time if t_end is None else t_end

    def objective(points: np.ndarray) -> np.ndarray:
        rendered = render_param_batch(points, table, shaping)
        return fidelity_of_rendered(model, gate, theta, rendered, duration, integrator)

    ansatz_x = None
    if ansatz is not None:
        ansatz_x = pack_pulses(clamp_set(ansatz), table)

    best: tuple[float, np.ndarray, np.ndarray, int, int] | None = None
    failures = []
    for restart in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        if ansatz_x is not None:
            x = ansatz_x.copy()
            if restart > 0:
                x = x + _perturbation(rng, table, cfg.perturb_scale)
        else:
            x = pack_pulses(random_pulse_set(table, duration, rng, cfg.init_scale), table)
        x = _clamp_params(x, table)

        outcome = _ascend(objective, x, table, cfg, rng)
        if outcome is None:
            failures.append(restart)
            continue
        traj, best_x, iters = outcome
        candidate = (traj[-1], best_x, traj, iters, restart)
        if best is None or candidate[0] > best[0]:
            best = candidate

    if best is None:
        raise OptimizationError(
            f"all {cfg.restarts} restarts hit non-finite fidelities (restarts {failures})")

    best_f, best_x, traj, iters, restart = best
    pulses = unpack_params(best_x, table, duration)
    fresh = float(objective(best_x[None])[0])
    return OptimResult(pulses=pulses, fidelity=fresh, iterations=iters,
                       trajectory=traj, ansatz_id=ansatz_id, restart_index=restart)


def _ascend(objective, x0: np.ndarray, table: dict[str, ChannelSpec],
            cfg: OptimConfig, rng: np.random.Generator):
    """Adam ascent from one start; returns (best-trajectory, best_x, iters)."""
    p = x0.size
    x = x0.copy()
    m = np.zeros(p)
    v = np.zeros(p)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    f0 = float(objective(x[None])[0])
    if not np.isfinite(f0):
        return None
    best_f, best_x = f0, x.copy()
    traj = [best_f]

    idx = np.arange(p)
    for it in range(1, cfg.max_iters + 1):
        if cfg.grad_mode == "central":
            points = np.empty((2 * p + 1, p))
            points[:] = x
            points[2 * idx, idx] += cfg.grad_step
            points[2 * idx + 1, idx] -= cfg.grad_step
            vals = np.asarray(objective(points))
            if not np.all(np.isfinite(vals)):
                return None
            grad = (vals[0:-1:2] - vals[1:-1:2]) / (2.0 * cfg.grad_step)
            f_here = float(vals[-1])
        else:
            delta = rng.choice(np.array([-1.0, 1.0]), size=p)
            points = np.stack([x + cfg.grad_step * delta, x - cfg.grad_step * delta, x])
            vals = np.asarray(objective(points))
            if not np.all(np.isfinite(vals)):
                return None
            grad = (vals[0] - vals[1]) / (2.0 * cfg.grad_step) * delta
            f_here = float(vals[2])

        if f_here > best_f:
            best_f, best_x = f_here, x.copy()
        traj.append(best_f)

        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** it)
        v_hat = v / (1.0 - beta2 ** it)
        x = _clamp_params(x + cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps), table)

        if it >= cfg.patience:
            ref = traj[-1 - cfg.patience]
            if (traj[-1] - ref) / max(abs(ref), 1e-12) < cfg.tolerance:
                break

    f_last = float(objective(x[None])[0])
    if np.isfinite(f_last) and f_last > best_f:
        best_f, best_x = f_last, x.copy()
    traj.append(best_f)
    return np.array(traj), best_x, len(traj) - 1


def select_gate_time(model: SystemModel, gate: str, candidate_ts: list[float],
                     cfg: OptimConfig = OptimConfig(),
                     integrator: IntegratorConfig = IntegratorConfig(),
                     shaping: ShapingConfig = ShapingConfig()) -> float:
    """Pick the gate time whose theta = pi optimization scores best.

    The hardest angle is pi (farthest from the identity), so the end
    time is chosen there and reused for the whole angle range. Ties go
    to the smallest candidate.
    """
    if not candidate_ts:
        raise ValueError("candidate_ts must be non-empty")
    best_t, best_f = None, -np.inf
    for t in sorted(candidate_ts):
        result = optimize_gate(model, gate, np.pi, cfg=cfg, integrator=integrator,
                               shaping=shaping, t_end=t)
        if result.fidelity > best_f + 1e-12:
            best_t, best_f = t, result.fidelity
    return best_t
