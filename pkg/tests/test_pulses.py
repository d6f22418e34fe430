import numpy as np
import pytest

from pulsefam import pulses as pl


CFG = pl.ShapingConfig()


def _shape(re, lower=-1.0, upper=1.0, endpoint=0.0, im=None, t_end=1.0):
    return pl.PulseShape(re=re, im=im, t_end=t_end, lower=lower, upper=upper,
                         endpoint_value=endpoint, complex_allowed=im is not None)


def test_render_zero_is_zero():
    y = pl.render(_shape(np.zeros(30)), CFG)
    assert y.shape == (CFG.n_samples,)
    assert np.all(y == 0.0)


def test_render_constant_plateau():
    c = 0.7
    y = pl.render(_shape(np.full(30, c)), CFG)
    assert abs(y[0]) < 1e-6 and abs(y[-1]) < 1e-6
    interior = y[CFG.n_samples // 4: 3 * CFG.n_samples // 4]
    assert np.max(np.abs(interior - c)) < 1e-3


def test_render_constant_at_endpoint_value():
    # two-photon drive held at its boundary value stays constant
    spec = pl.ChannelSpec(-4.0, 4.0, 4.0)
    shape = pl.shape_from_spec(spec, 3.0, re=np.full(30, 4.0))
    y = pl.render(shape, CFG)
    assert np.max(np.abs(y - 4.0)) < 1e-12


def test_render_endpoints_exact():
    rng = np.random.default_rng(0)
    shape = _shape(rng.uniform(-1, 1, 30), endpoint=0.0)
    y = pl.render(shape, CFG)
    assert abs(y[0]) < 1e-6 and abs(y[-1]) < 1e-6


def test_render_respects_bounds():
    rng = np.random.default_rng(1)
    shape = _shape(rng.uniform(-1, 1, 30) * 3.0)
    y = pl.render(shape, CFG)
    assert y.min() >= -1.0 - 1e-12 and y.max() <= 1.0 + 1e-12


def test_render_linearity_without_clamp():
    rng = np.random.default_rng(2)
    s1 = rng.uniform(-0.4, 0.4, 30)
    s2 = rng.uniform(-0.4, 0.4, 30)
    for alpha in (0.0, 0.3, 0.8, 1.0):
        mixed = pl.render(_shape(alpha * s1 + (1 - alpha) * s2), CFG)
        combo = alpha * pl.render(_shape(s1), CFG) + (1 - alpha) * pl.render(_shape(s2), CFG)
        assert np.max(np.abs(mixed - combo)) < 1e-10


def test_render_deterministic():
    rng = np.random.default_rng(3)
    shape = _shape(rng.uniform(-1, 1, 30))
    assert np.array_equal(pl.render(shape, CFG), pl.render(shape, CFG))


def test_render_complex_modulus_clamped():
    shape = _shape(np.full(30, 0.3), lower=-0.308, upper=0.308, im=np.full(30, 0.3))
    y = pl.render(shape, CFG)
    assert np.max(np.abs(y)) <= 0.308 + 1e-12


def test_segment_count_enforced():
    with pytest.raises(ValueError):
        _shape(np.zeros(29))


def test_clamp_to_bounds_real():
    shape = _shape(np.array([1.5] + [0.2] * 29))
    clamped = pl.clamp_to_bounds(shape)
    assert clamped.re[0] == 1.0
    assert np.all(clamped.re[1:] == 0.2)


def test_clamp_to_bounds_complex_modulus():
    shape = _shape(np.full(30, 2.0), lower=-0.308, upper=0.308, im=np.zeros(30))
    clamped = pl.clamp_to_bounds(shape)
    assert np.allclose(clamped.re, 0.308)
    assert np.allclose(clamped.im, 0.0)


def test_pulse_set_shared_t_end():
    a = _shape(np.zeros(30), t_end=1.0)
    b = _shape(np.zeros(30), t_end=2.0)
    with pytest.raises(ValueError):
        pl.PulseSet({"a": a, "b": b}, 1.0)


def test_serialization_roundtrip():
    rng = np.random.default_rng(4)
    table = {
        "re_ch": pl.ChannelSpec(-1.0, 1.0, 0.0),
        "c_ch": pl.ChannelSpec(-0.308, 0.308, 0.0, complex_allowed=True),
    }
    ps = pl.random_pulse_set(table, 2.06, rng)
    obj = pl.pulse_set_to_json(ps)
    assert obj["schema"] == pl.PULSESET_SCHEMA
    assert obj["channels"]["re_ch"]["im"] is None
    assert obj["channels"]["c_ch"]["t_end"] == 2.06
    back = pl.pulse_set_from_json(obj, table)
    for name in table:
        assert np.allclose(back.channels[name].re, ps.channels[name].re)
        if ps.channels[name].im is not None:
            assert np.allclose(back.channels[name].im, ps.channels[name].im)


def test_serialization_unknown_channel():
    table = {"a": pl.ChannelSpec(-1, 1)}
    ps = pl.zero_pulse_set(table, 1.0)
    obj = pl.pulse_set_to_json(ps)
    with pytest.raises(ValueError):
        pl.pulse_set_from_json(obj, {"b": pl.ChannelSpec(-1, 1)})


def test_time_grid():
    t = pl.time_grid(0.73, CFG)
    assert t[0] == 0.0 and t[-1] == 0.73 and t.size == CFG.n_samples
