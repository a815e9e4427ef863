import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retipulse import pulse, synthgen
from retipulse.errors import (InsufficientPulsationError, InvalidParameterError, NoVesselError,
                              TooShortError, TrackingLostError)

FPS = 30.0


def sinusoid(freq, seconds=4.0, fps=FPS, amp=1.0, offset=10.0, phase=0.0):
    t = np.arange(int(round(seconds * fps))) / fps
    return offset + amp * np.sin(2 * math.pi * freq * t + phase)


def amplitude(x, freq, fps=FPS):
    """Least-squares amplitude of the ``freq`` component."""
    t = np.arange(len(x)) / fps
    basis = np.stack([np.sin(2 * math.pi * freq * t), np.cos(2 * math.pi * freq * t),
                      np.ones_like(t)], axis=1)
    (a, b, _), *_ = np.linalg.lstsq(basis, x, rcond=None)
    return math.hypot(a, b)


def oblique_vessel(cy, phase=0.0, amp=1.5, freq=1.2, angle=20.0):
    c = np.array([128.0, cy])
    d = np.array([math.cos(math.radians(angle)), math.sin(math.radians(angle))]) * 85
    return synthgen.VesselSpec(points=(tuple(c - d), tuple(c + d)), width=10, intensity=60,
                               pulse_amplitude=amp, pulse_frequency=freq, pulse_phase=phase)


# -- smoothing --------------------------------------------------------------

def test_passband_1hz():
    x = sinusoid(1.0)
    y = pulse.smooth_values(x, FPS)
    mid = slice(15, -15)
    assert amplitude(y[mid], 1.0) >= 0.9 * amplitude(x[mid], 1.0)


def test_stopband_5hz():
    x = sinusoid(5.0)
    y = pulse.smooth_values(x, FPS)
    mid = slice(15, -15)
    assert amplitude(y[mid], 5.0) <= 0.2 * amplitude(x[mid], 5.0)


def test_half_power_at_cutoff():
    b = pulse.lowpass_kernel(2.0, FPS, 31)
    w = np.exp(-2j * math.pi * 2.0 / FPS * np.arange(len(b)))
    assert abs((b * w).sum()) ** 2 == pytest.approx(0.5, abs=1e-6)
    assert b.sum() == pytest.approx(1.0)
    assert np.allclose(b, b[::-1])


def test_cutoff_above_nyquist_skips_lowpass():
    assert pulse.lowpass_kernel(20.0, FPS) is None
    x = sinusoid(1.0)
    params = pulse.PulseParams(lowpass_hz=20.0)
    assert np.allclose(pulse.smooth_values(x, FPS, params),
                       pulse.savgol_filter(x, 5, 2, mode="interp"))


def test_constant_unchanged():
    x = np.full(40, 7.25)
    assert np.allclose(pulse.smooth_values(x, FPS), x)


def test_smooth_keeps_length_and_fps():
    s = pulse.DiameterSeries(sinusoid(1.0, 2.0), FPS, "vein")
    out = pulse.smooth(s)
    assert len(out) == len(s) and out.fps == FPS and out.vessel_kind == "vein"


def test_smooth_too_short():
    with pytest.raises(TooShortError):
        pulse.smooth_values(np.arange(5.0), FPS)
    assert len(pulse.smooth_values(np.arange(6.0), FPS)) == 6


def test_zero_phase():
    # a symmetric bump stays centered
    x = np.exp(-0.5 * ((np.arange(61) - 30) / 4.0) ** 2) + 1.0
    y = pulse.smooth_values(x, FPS)
    assert int(np.argmax(y)) == 30


# -- extrema ----------------------------------------------------------------

def test_extrema_sinusoid():
    x = sinusoid(1.0, 2.0)
    ext = pulse.find_extrema(x)
    assert [k for _, k in ext] == ["max", "min", "max", "min"]
    for (i, _), want in zip(ext, (7.5, 22.5, 37.5, 52.5)):
        assert abs(i - want) <= 1


def test_extrema_ramp():
    with pytest.raises(InsufficientPulsationError):
        pulse.find_extrema(np.linspace(0, 5, 50))


def test_extrema_plateau_middle():
    ext = pulse.find_extrema([0, 1, 3, 3, 3, 1, 0, 2, 0])
    assert ext[0] == (3, "max")
    assert ext[1] == (6, "min")


def test_extrema_shallow_dip_counts():
    # strict extrema of the plateau-collapsed series alternate on their own
    x = [0, 5, 4, 6, 3, 1, 2]
    assert pulse.find_extrema(x) == [(1, "max"), (2, "min"), (3, "max"), (5, "min")]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=3, max_size=40))
def test_extrema_alternate(values):
    try:
        ext = pulse.find_extrema(values)
    except InsufficientPulsationError:
        return
    idx = [i for i, _ in ext]
    kinds = [k for _, k in ext]
    assert all(a < b for a, b in zip(idx, idx[1:]))
    assert all(a != b for a, b in zip(kinds, kinds[1:]))


# -- heart rate -------------------------------------------------------------

def test_half_second_separation_is_60bpm():
    ext = [(0, "max"), (15, "min"), (30, "max"), (45, "min")]
    rep = pulse.heart_rate(ext, FPS)
    assert rep.mean_separation == pytest.approx(0.5)
    assert rep.period == pytest.approx(1.0)
    assert rep.heart_rate_bpm == pytest.approx(60.0)
    assert rep.bpm_by_formula == {pulse.TWICE_SEPARATION: pytest.approx(60.0),
                                  pulse.SEPARATION: pytest.approx(120.0)}


def test_both_formulas_on_published_separation():
    assert pulse.bpm_from_separation(0.687, pulse.TWICE_SEPARATION)[1] == pytest.approx(43.67, abs=0.005)
    assert pulse.bpm_from_separation(0.687, pulse.SEPARATION)[1] == pytest.approx(87.34, abs=0.005)
    period, _ = pulse.bpm_from_separation(0.687)
    assert period == pytest.approx(1.374)
    with pytest.raises(InvalidParameterError):
        pulse.bpm_from_separation(0.5, "3*sep")


def test_heart_rate_needs_two_extrema():
    with pytest.raises(InsufficientPulsationError):
        pulse.heart_rate([(3, "max")], FPS)


@pytest.mark.parametrize("freq", [0.8, 1.0, 1.2, 1.5])
def test_series_heart_rate(freq, rng):
    x = sinusoid(freq, 4.0, amp=1.5) + rng.normal(0, 0.1, 120)
    _, rep = pulse.analyse_series(pulse.DiameterSeries(x, FPS))
    assert rep.heart_rate_bpm == pytest.approx(60 * freq, abs=2)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 50), st.floats(-20, 20))
def test_rate_invariant_to_affine_values(scale, shift):
    x = sinusoid(1.2, 4.0, amp=1.5, offset=30.0)
    y = scale * x + shift + 1000  # keep values non-negative
    _, a = pulse.analyse_series(pulse.DiameterSeries(x, FPS))
    _, b = pulse.analyse_series(pulse.DiameterSeries(y, FPS))
    assert [i for i, _ in a.extrema] == [i for i, _ in b.extrema]
    assert a.heart_rate_bpm == pytest.approx(b.heart_rate_bpm)


def test_report_dict():
    _, rep = pulse.analyse_series(pulse.DiameterSeries(sinusoid(1.0), FPS))
    d = rep.to_dict()
    assert set(d) == {"mean_separation", "period", "heart_rate_bpm", "extrema", "formula",
                      "bpm_by_formula"}
    assert all(isinstance(i, int) for i, _ in d["extrema"])


def test_formula_switch():
    s = pulse.DiameterSeries(sinusoid(1.0), FPS)
    _, a = pulse.analyse_series(s)
    _, b = pulse.analyse_series(s, pulse.PulseParams(formula=pulse.SEPARATION))
    assert b.heart_rate_bpm == pytest.approx(2 * a.heart_rate_bpm)
    assert a.bpm_by_formula == b.bpm_by_formula


# -- validation -------------------------------------------------------------

def test_series_validation():
    with pytest.raises(InvalidParameterError):
        pulse.DiameterSeries([1.0, 2.0], 0)
    with pytest.raises(InvalidParameterError):
        pulse.DiameterSeries([1.0, -2.0], 30)
    with pytest.raises(InvalidParameterError):
        pulse.DiameterSeries([1.0, float("nan")], 30)
    assert np.allclose(pulse.DiameterSeries([1, 2, 3], 2.0).times, [0, 0.5, 1.0])


@pytest.mark.parametrize("kw", [dict(sg_window=4), dict(sg_order=5), dict(lowpass_hz=0),
                                dict(lowpass_taps=30), dict(formula="x")])
def test_params_validation(kw):
    with pytest.raises(InvalidParameterError):
        pulse.PulseParams(**kw).validate()


# -- tracking ---------------------------------------------------------------

def test_track_follows_pulsation():
    scene = synthgen.SceneSpec(background=160, noise_sigma=5, vessels=(oblique_vessel(128),),
                               fps=FPS, duration=2.0, seed=3)
    seq = synthgen.render_sequence(scene)
    series = pulse.track(seq.frames, (128, 128), fps=FPS)
    assert len(series) == 60 and series.fps == FPS
    assert pulse.pearson(series.values, seq.series[0]) >= 0.9


def test_track_static():
    scene = synthgen.SceneSpec(background=160, noise_sigma=5, vessels=(oblique_vessel(128, amp=0.0),),
                               fps=FPS, duration=0.5, seed=4)
    seq = synthgen.render_sequence(scene)
    series = pulse.track(seq.frames, (128, 128), fps=FPS)
    assert np.std(series.values) <= 0.5


def test_track_lost_at_frame():
    scene = synthgen.SceneSpec(background=160, noise_sigma=5, vessels=(oblique_vessel(128, amp=0.0),),
                               fps=FPS, duration=0.2, seed=4)
    frames = synthgen.render_sequence(scene).frames
    blank, _ = synthgen.render(synthgen.SceneSpec(background=160, noise_sigma=5, seed=9))
    with pytest.raises(TrackingLostError) as info:
        pulse.track(frames[:4] + [blank] + frames[4:], (128, 128), fps=FPS)
    assert info.value.frame == 4


def test_track_first_frame_miss():
    scene = synthgen.SceneSpec(background=160, noise_sigma=5, vessels=(oblique_vessel(128, amp=0.0),),
                               fps=FPS, duration=0.2, seed=4)
    frames = synthgen.render_sequence(scene).frames
    with pytest.raises(NoVesselError) as info:
        pulse.track(frames, (10, 250), fps=FPS)
    assert not isinstance(info.value, TrackingLostError)


def test_track_needs_two_frames():
    img, _ = synthgen.render(synthgen.SceneSpec(vessels=(oblique_vessel(128),)))
    with pytest.raises(TooShortError):
        pulse.track([img], (128, 128))


def test_pearson():
    a = np.arange(10.0)
    assert pulse.pearson(a, 2 * a + 1) == pytest.approx(1.0)
    assert pulse.pearson(a, -a) == pytest.approx(-1.0)
    assert pulse.pearson(a, np.ones(10)) == 0.0
