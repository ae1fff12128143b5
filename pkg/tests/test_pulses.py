import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonshaper.pulses import (Envelope, StarkMap, build_init_sequence,
                                 build_train, compensate_phase,
                                 envelope_from_csv, envelope_to_csv,
                                 gaussian_pulse, pulse_area, synthesize_sin2,
                                 synthesize_square)


def linear_stark(slope=-0.01, max_amp=1.0):
    # shift = slope * amplitude, the simplest legal map
    return StarkMap(amplitudes=np.array([0.0, max_amp]),
                    shifts=np.array([0.0, slope * max_amp]))


# ---------------------------------------------------------------------------
# envelope container
# ---------------------------------------------------------------------------

def test_envelope_requires_two_samples():
    with pytest.raises(ValueError):
        Envelope(dt=0.01, samples=np.array([0.1 + 0j]))


def test_envelope_rejects_non_finite():
    with pytest.raises(ValueError):
        Envelope(dt=0.01, samples=np.array([0.0, np.nan, 0.0], dtype=complex))


def test_envelope_rejects_above_ceiling():
    with pytest.raises(ValueError):
        Envelope(dt=0.01, samples=np.array([0.0, 1.4, 0.0], dtype=complex),
                 ceiling=1.0)


def test_envelope_samples_read_only():
    env = synthesize_sin2(0.5, 10.0)
    with pytest.raises(ValueError):
        env.samples[3] = 1.0


def test_envelope_interpolation_and_support():
    env = synthesize_square(0.3, 1.0, dt=0.5)   # samples at 0, 0.5, 1.0
    assert env(-0.1) == 0.0
    assert env(1.1) == 0.0
    assert env(0.25) == pytest.approx(0.3)      # linear between samples
    assert env(0.0) == pytest.approx(0.3)


def test_envelope_shifted():
    env = synthesize_sin2(0.5, 20.0)
    moved = env.shifted(7.0)
    assert moved.t0 == pytest.approx(env.t0 + 7.0)
    assert moved.t_end == pytest.approx(env.t_end + 7.0)
    assert np.array_equal(moved.samples, env.samples)


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def test_sin2_endpoints_exactly_zero():
    env = synthesize_sin2(0.7, 200.0)
    assert env.samples[0] == 0.0
    assert env.samples[-1] == 0.0
    assert env.amplitude_max() == pytest.approx(0.7)
    assert env.duration == pytest.approx(200.0)


def test_sin2_area_is_half_amp_times_duration():
    # sum of sin^2 over a uniform period grid is exactly n/2
    env = synthesize_sin2(0.7, 200.0)
    assert pulse_area(env) == pytest.approx(0.5 * 0.7 * 200.0, abs=1e-10)


def test_square_area():
    env = synthesize_square(0.4, 50.0)
    assert pulse_area(env) == pytest.approx(0.4 * 50.0, abs=1e-10)


def test_sin2_rejects_bad_arguments():
    with pytest.raises(ValueError):
        synthesize_sin2(-0.1, 100.0)
    with pytest.raises(ValueError):
        synthesize_sin2(0.1, 0.0)
    with pytest.raises(ValueError):
        synthesize_sin2(0.1, 100.003, dt=0.01)   # not a multiple of dt


def test_gaussian_pulse_shape():
    env = gaussian_pulse(0.04, sigma=5.0)
    assert env.duration == pytest.approx(30.0)   # 2 * 3 sigma
    center = env.t0 + 0.5 * env.duration
    assert abs(env(center)) == pytest.approx(0.04, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(amp=st.floats(0.01, 1.0), duration=st.sampled_from([20.0, 55.0, 130.0]))
def test_sin2_scaling_and_bounds(amp, duration):
    env = synthesize_sin2(amp, duration)
    assert env.amplitude_max() <= amp + 1e-12
    assert pulse_area(env) == pytest.approx(0.5 * amp * duration, rel=1e-9)


# ---------------------------------------------------------------------------
# Stark map
# ---------------------------------------------------------------------------

def test_stark_map_requires_zero_anchor():
    with pytest.raises(ValueError):
        StarkMap(amplitudes=np.array([0.1, 0.5]),
                 shifts=np.array([-0.001, -0.01]))


def test_stark_map_requires_increasing_grid():
    with pytest.raises(ValueError):
        StarkMap(amplitudes=np.array([0.0, 0.5, 0.5]),
                 shifts=np.array([0.0, -0.001, -0.002]))


def test_stark_map_range_checked():
    m = linear_stark(max_amp=0.5)
    with pytest.raises(ValueError):
        m.shift(0.6)


def test_stark_map_hits_nodes():
    amps = np.array([0.0, 0.2, 0.5, 1.0])
    shifts = np.array([0.0, -0.002, -0.011, -0.045])
    m = StarkMap(amplitudes=amps, shifts=shifts)
    assert np.allclose(m.shift(amps), shifts, atol=1e-15)


def test_stark_map_zero():
    m = StarkMap.zero(1.0)
    assert np.all(m.shift(np.linspace(0, 1, 7)) == 0.0)


def test_stark_map_json_round_trip(tmp_path):
    m = StarkMap(amplitudes=np.array([0.0, 0.3, 0.8]),
                 shifts=np.array([0.0, -0.0021, -0.0154]))
    path = tmp_path / "map.json"
    m.to_json(str(path))
    again = StarkMap.from_json(str(path))
    assert np.array_equal(again.amplitudes, m.amplitudes)
    assert np.array_equal(again.shifts, m.shifts)
    doc = json.loads(path.read_text())
    assert "amplitudes_GHz" in doc and "shifts_GHz" in doc


# ---------------------------------------------------------------------------
# phase compensation
# ---------------------------------------------------------------------------

def test_compensation_preserves_magnitude():
    env = synthesize_sin2(0.7, 100.0)
    out = compensate_phase(env, linear_stark())
    assert np.allclose(np.abs(out.samples), np.abs(env.samples), atol=1e-14)
    assert out.compensated


def test_compensation_phase_integral():
    # phase(t) = -2 pi * integral of shift(|env|) up to t
    env = synthesize_sin2(0.6, 80.0)
    slope = -0.01
    out = compensate_phase(env, linear_stark(slope))
    shifts = slope * np.abs(env.samples)
    t = env.times
    ph = np.concatenate(([0.0], np.cumsum(
        0.5 * (shifts[1:] + shifts[:-1]) * np.diff(t))))
    expected = -2 * np.pi * ph
    got = np.unwrap(np.angle(out.samples[1:-1]))
    assert np.allclose(got, expected[1:-1], atol=1e-9)


def test_compensation_noop_for_zero_map():
    env = synthesize_sin2(0.5, 60.0)
    out = compensate_phase(env, StarkMap.zero(1.0))
    assert np.allclose(out.samples, env.samples, atol=1e-15)


# ---------------------------------------------------------------------------
# pulse trains
# ---------------------------------------------------------------------------

def test_train_disjoint_peaks_sum():
    peaks = [{"amp": 0.3, "duration": 40.0, "start": 0.0},
             {"amp": 0.2, "duration": 40.0, "start": 100.0}]
    env = build_train(peaks)
    lone = synthesize_sin2(0.3, 40.0)
    assert env(20.0) == pytest.approx(lone(20.0))
    assert env(70.0) == pytest.approx(0.0, abs=1e-15)
    assert abs(env(120.0)) == pytest.approx(0.2, rel=1e-12)


def test_train_phase_flip_negates_peak():
    peaks = [{"amp": 0.3, "duration": 40.0, "start": 0.0},
             {"amp": 0.3, "duration": 40.0, "start": 60.0, "phase": np.pi}]
    env = build_train(peaks)
    assert env(20.0).real > 0
    assert env(80.0).real == pytest.approx(-env(20.0).real, rel=1e-12)


def test_train_overlap_adds_coherently():
    peaks = [{"amp": 0.2, "duration": 40.0, "start": 0.0},
             {"amp": 0.2, "duration": 40.0, "start": 0.0, "phase": np.pi}]
    env = build_train(peaks)
    assert np.max(np.abs(env.samples)) < 1e-14


def test_train_with_stark_is_compensated():
    peaks = [{"amp": 0.3, "duration": 40.0, "start": 0.0}]
    env = build_train(peaks, stark=linear_stark())
    assert env.compensated
    assert np.allclose(np.abs(env.samples),
                       np.abs(build_train(peaks).samples), atol=1e-14)


def test_train_requires_peaks():
    with pytest.raises(ValueError):
        build_train([])


# ---------------------------------------------------------------------------
# preparation sequences
# ---------------------------------------------------------------------------

def test_init_sequence_prepare_f():
    seq = build_init_sequence("prepare_f", 0.04, 0.028)
    assert [p.transition for p in seq] == ["ge", "ef"]
    assert seq[0].envelope.amplitude_max() == pytest.approx(0.04)
    assert seq[1].envelope.t0 == pytest.approx(30.0)


def test_init_sequence_half_amplitude_for_superposition():
    seq = build_init_sequence("prepare_g_plus_f", 0.04, 0.028)
    assert seq[0].envelope.amplitude_max() == pytest.approx(0.02)
    assert seq[1].envelope.amplitude_max() == pytest.approx(0.028)


def test_init_sequence_rejects_bad_input():
    with pytest.raises(ValueError):
        build_init_sequence("prepare_h", 0.04, 0.028)
    with pytest.raises(ValueError):
        build_init_sequence("prepare_f", 0.0, 0.028)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def test_envelope_csv_bit_exact(tmp_path):
    rng = np.random.default_rng(21)
    samples = (rng.normal(size=64) + 1j * rng.normal(size=64)) * 0.05
    samples[0] = samples[-1] = 0.0
    env = Envelope(dt=0.01, samples=samples, t0=-3.0)
    path = tmp_path / "env.csv"
    envelope_to_csv(env, str(path))
    again = envelope_from_csv(str(path))
    assert np.array_equal(again.samples, env.samples)
    assert again.t0 == env.t0
    # dt is reconstructed from the time column, so it can move by one ulp
    assert again.dt == pytest.approx(env.dt, rel=1e-12)
