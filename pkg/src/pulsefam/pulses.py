"""Piecewise-constant control pulses and the shaping pipeline.

A pulse is 30 segment values on [0, T] (complex-valued channels keep
independent real/imaginary segment arrays). Rendering expands the
segments to a uniform sample grid and applies, in order: Gaussian-kernel
smoothing, a hard spectral low-pass, endpoint pinning to the channel's
required boundary value, and a final clamp into the channel bounds.

Every stage before the clamp is affine with fixed coefficients, so the
whole pipeline is implemented as a cached (samples x segments) matrix
plus an endpoint offset; rendering a batch of segment vectors is a
single matrix product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

N_SEGMENTS = 30

#: fraction of T over which the endpoint taper ramps from 0 to 1
_PIN_RAMP_FRACTION = 2.0 / N_SEGMENTS

PULSESET_SCHEMA = "pulsefam.pulseset/v1"


@dataclass(frozen=True)
class ShapingConfig:
    """Parameters of the pulse shaping pipeline.

    gaussian_kernel_width: standard deviation of the smoothing kernel as
        a fraction of the gate time T.
    lowpass_cutoff: highest surviving Fourier component, in cycles per T.
    samples_per_segment: render resolution; output length is
        30 * samples_per_segment + 1.
    """

    gaussian_kernel_width: float = 0.02
    lowpass_cutoff: int = 15
    samples_per_segment: int = 8

    def __post_init__(self):
        if self.gaussian_kernel_width <= 0:
            raise ValueError("gaussian_kernel_width must be positive")
        if self.lowpass_cutoff <= 0:
            raise ValueError("lowpass_cutoff must be positive")
        if self.samples_per_segment <= 0:
            raise ValueError("samples_per_segment must be positive")

    @property
    def n_samples(self) -> int:
        return N_SEGMENTS * self.samples_per_segment + 1


@dataclass(frozen=True)
class ChannelSpec:
    """Static per-channel description: bounds, boundary value, value type."""

    lower: float
    upper: float
    endpoint_value: float = 0.0
    complex_allowed: bool = False

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"invalid bounds [{self.lower}, {self.upper}]")


@dataclass
class PulseShape:
    """One channel's 30-segment pulse on [0, t_end]."""

    re: np.ndarray
    im: np.ndarray | None
    t_end: float
    lower: float
    upper: float
    endpoint_value: float = 0.0
    complex_allowed: bool = False

    def __post_init__(self):
        self.re = np.asarray(self.re, dtype=float)
        if self.re.shape != (N_SEGMENTS,):
            raise ValueError(f"expected {N_SEGMENTS} segments, got shape {self.re.shape}")
        if self.im is not None:
            self.im = np.asarray(self.im, dtype=float)
            if self.im.shape != (N_SEGMENTS,):
                raise ValueError(f"expected {N_SEGMENTS} imaginary segments, got shape {self.im.shape}")
        if self.im is not None and not self.complex_allowed:
            raise ValueError("imaginary segments on a real-valued channel")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.lower > self.upper:
            raise ValueError(f"invalid bounds [{self.lower}, {self.upper}]")

    @property
    def values(self) -> np.ndarray:
        """Segments as a complex (real-typed when real) array."""
        if self.im is None:
            return self.re
        return self.re + 1j * self.im

    @property
    def spec(self) -> ChannelSpec:
        return ChannelSpec(self.lower, self.upper, self.endpoint_value, self.complex_allowed)

    def n_params(self) -> int:
        return 2 * N_SEGMENTS if self.im is not None else N_SEGMENTS


def shape_from_spec(spec: ChannelSpec, t_end: float,
                    re: np.ndarray | None = None,
                    im: np.ndarray | None = None) -> PulseShape:
    """Build a PulseShape for a channel spec, defaulting to zero segments."""
    re = np.zeros(N_SEGMENTS) if re is None else np.asarray(re, dtype=float)
    if spec.complex_allowed and im is None:
        im = np.zeros(N_SEGMENTS)
    return PulseShape(re=re, im=im, t_end=t_end, lower=spec.lower, upper=spec.upper,
                      endpoint_value=spec.endpoint_value, complex_allowed=spec.complex_allowed)


@dataclass
class PulseSet:
    """Named collection of pulse channels sharing one gate time."""

    channels: dict[str, PulseShape]
    t_end: float

    def __post_init__(self):
        for name, shape in self.channels.items():
            if abs(shape.t_end - self.t_end) > 1e-12:
                raise ValueError(f"channel {name!r} t_end {shape.t_end} != set t_end {self.t_end}")

    def channel_names(self) -> list[str]:
        return list(self.channels)

    def copy(self) -> "PulseSet":
        return PulseSet(
            channels={
                name: replace(s, re=s.re.copy(), im=None if s.im is None else s.im.copy())
                for name, s in self.channels.items()
            },
            t_end=self.t_end,
        )


# ---------------------------------------------------------------------------
# shaping pipeline
# ---------------------------------------------------------------------------

_PIPELINE_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _gaussian_kernel(sigma_samples: float) -> np.ndarray:
    half = max(1, int(np.ceil(4.0 * sigma_samples)))
    x = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma_samples) ** 2)
    return k / k.sum()


def _taper_window(n_samples: int) -> np.ndarray:
    # raised-cosine ramps pinning both ends; 1 in the interior
    x = np.linspace(0.0, 1.0, n_samples)
    w = np.ones(n_samples)
    r = _PIN_RAMP_FRACTION
    lo = x < r
    hi = x > 1.0 - r
    w[lo] = 0.5 * (1.0 - np.cos(np.pi * x[lo] / r))
    w[hi] = 0.5 * (1.0 - np.cos(np.pi * (1.0 - x[hi]) / r))
    return w


def _pipeline_operator(cfg: ShapingConfig) -> tuple[np.ndarray, np.ndarray]:
    """(n_samples x 30) linear stage matrix and the endpoint taper window.

    The matrix covers expansion, Gaussian smoothing and the low-pass;
    the taper applies the endpoint pinning as y = e + w * (A s - e).
    All stages are sample-index based, so the operator depends only on
    the shaping config, not on t_end.
    """
    key = (cfg.gaussian_kernel_width, cfg.lowpass_cutoff, cfg.samples_per_segment)
    cached = _PIPELINE_CACHE.get(key)
    if cached is not None:
        return cached

    spp = cfg.samples_per_segment
    n = cfg.n_samples
    seg_index = np.minimum(np.arange(n) // spp, N_SEGMENTS - 1)
    expand = np.zeros((n, N_SEGMENTS))
    expand[np.arange(n), seg_index] = 1.0

    kernel = _gaussian_kernel(cfg.gaussian_kernel_width * (n - 1))
    half = (len(kernel) - 1) // 2
    cols = np.pad(expand, ((half, half), (0, 0)), mode="edge")
    smoothed = np.empty_like(expand)
    for j in range(N_SEGMENTS):
        smoothed[:, j] = np.convolve(cols[:, j], kernel, mode="valid")

    freqs = np.fft.fftfreq(n, d=1.0 / n)
    keep = np.abs(freqs) <= cfg.lowpass_cutoff
    filtered = np.fft.ifft(np.fft.fft(smoothed, axis=0) * keep[:, None], axis=0).real

    window = _taper_window(n)
    _PIPELINE_CACHE[key] = (filtered, window)
    return filtered, window


def render_segments(segments: np.ndarray, endpoint_value: float, lower: float,
                    upper: float, complex_allowed: bool, cfg: ShapingConfig) -> np.ndarray:
    """Shape raw segment values (batched over leading axes) into waveforms.

    Returns an array of shape ``segments.shape[:-1] + (n_samples,)``.
    Real channels are clamped into [lower, upper]; complex channels have
    their modulus rescaled to at most ``upper``.
    """
    a, w = _pipeline_operator(cfg)
    seg = np.asarray(segments)
    y = seg @ a.T
    y = endpoint_value + w * (y - endpoint_value)
    if complex_allowed and np.iscomplexobj(seg):
        mag = np.abs(y)
        over = mag > upper
        if np.any(over):
            y = np.where(over, y * (upper / np.where(over, mag, 1.0)), y)
        return y
    return np.clip(y.real if np.iscomplexobj(y) else y, lower, upper)


def render(shape: PulseShape, cfg: ShapingConfig) -> np.ndarray:
    """Render one pulse shape to its sampled waveform on [0, t_end]."""
    return render_segments(shape.values, shape.endpoint_value, shape.lower,
                           shape.upper, shape.complex_allowed, cfg)


def render_set(pulses: PulseSet, cfg: ShapingConfig) -> dict[str, np.ndarray]:
    """Render every channel of a pulse set."""
    return {name: render(shape, cfg) for name, shape in pulses.channels.items()}


def time_grid(t_end: float, cfg: ShapingConfig) -> np.ndarray:
    return np.linspace(0.0, t_end, cfg.n_samples)


def clamp_to_bounds(shape: PulseShape) -> PulseShape:
    """Project segment values into the channel bounds.

    Real segments are clipped into [lower, upper]; complex segments are
    rescaled so their modulus does not exceed the upper bound.
    """
    if shape.im is None:
        return replace(shape, re=np.clip(shape.re, shape.lower, shape.upper))
    vals = shape.re + 1j * shape.im
    mag = np.abs(vals)
    over = mag > shape.upper
    if np.any(over):
        scale = np.where(over, shape.upper / np.where(over, mag, 1.0), 1.0)
        vals = vals * scale
    return replace(shape, re=vals.real, im=vals.imag)


def clamp_set(pulses: PulseSet) -> PulseSet:
    return PulseSet({n: clamp_to_bounds(s) for n, s in pulses.channels.items()}, pulses.t_end)


# ---------------------------------------------------------------------------
# construction and serialization
# ---------------------------------------------------------------------------

def zero_pulse_set(channel_table: dict[str, ChannelSpec], t_end: float) -> PulseSet:
    """All-zero segments for every channel (endpoints untouched)."""
    return PulseSet({name: shape_from_spec(spec, t_end) for name, spec in channel_table.items()},
                    t_end)


def constant_pulse_set(channel_table: dict[str, ChannelSpec], t_end: float) -> PulseSet:
    """Every channel held at its required endpoint value."""
    return PulseSet(
        {name: shape_from_spec(spec, t_end, re=np.full(N_SEGMENTS, spec.endpoint_value))
         for name, spec in channel_table.items()},
        t_end,
    )


def random_pulse_set(channel_table: dict[str, ChannelSpec], t_end: float,
                     rng: np.random.Generator, scale: float = 0.8) -> PulseSet:
    """Seeded random segments within ``scale`` times the bounds.

    Each channel gets a random constant offset plus per-segment jitter:
    the offset spreads start points across distinct solution branches
    (different net pulse areas), which zero-mean draws almost never
    reach.
    """
    channels = {}
    for name, spec in channel_table.items():
        if spec.complex_allowed:
            halfw = scale * spec.upper / np.sqrt(2.0)
            re = _biased_segments(rng, 0.0, halfw)
            im = _biased_segments(rng, 0.0, halfw)
        else:
            center = 0.5 * (spec.lower + spec.upper)
            halfw = 0.5 * (spec.upper - spec.lower) * scale
            re = _biased_segments(rng, center, halfw)
            im = None
        channels[name] = shape_from_spec(spec, t_end, re=re, im=im)
    return PulseSet(channels, t_end)


def _biased_segments(rng: np.random.Generator, center: float, halfw: float) -> np.ndarray:
    bias = rng.uniform(-0.7, 0.7) * halfw
    jitter = rng.uniform(-0.3, 0.3, N_SEGMENTS) * halfw
    return np.clip(center + bias + jitter, center - halfw, center + halfw)


def pulse_set_to_json(pulses: PulseSet) -> dict:
    """JSON-serializable form: per channel re/im segments, t_end, bounds."""
    return {
        "schema": PULSESET_SCHEMA,
        "t_end": pulses.t_end,
        "channels": {
            name: {
                "re": [float(v) for v in s.re],
                "im": None if s.im is None else [float(v) for v in s.im],
                "t_end": s.t_end,
                "bounds": [s.lower, s.upper],
            }
            for name, s in pulses.channels.items()
        },
    }


def pulse_set_from_json(obj: dict, channel_table: dict[str, ChannelSpec]) -> PulseSet:
    """Rebuild a PulseSet; endpoint/value-type flags come from the table."""
    t_end = float(obj["t_end"])
    channels = {}
    for name, entry in obj["channels"].items():
        if name not in channel_table:
            raise ValueError(f"channel {name!r} not in the system channel table")
        spec = channel_table[name]
        im = entry.get("im")
        channels[name] = shape_from_spec(spec, t_end, re=np.array(entry["re"], dtype=float),
                                         im=None if im is None else np.array(im, dtype=float))
    return PulseSet(channels, t_end)


def dumps_pulse_set(pulses: PulseSet) -> str:
    return json.dumps(pulse_set_to_json(pulses), sort_keys=True)
