"""Drive envelope synthesis and Stark-shift phase compensation.

Envelopes are complex baseband waveforms Omega(t) in ordinary GHz on a
uniform grid (default 0.01 ns spacing); the dynamics module converts to
angular units at the Hamiltonian boundary and resamples by linear
interpolation. All shapes here are amplitude-limited by a configurable
ceiling (1.0 GHz by default) mirroring the output range of the waveform
generator being modeled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import PchipInterpolator

__all__ = [
    "Envelope",
    "StarkMap",
    "PrepPulse",
    "synthesize_sin2",
    "synthesize_square",
    "gaussian_pulse",
    "pulse_area",
    "compensate_phase",
    "build_train",
    "build_init_sequence",
    "envelope_to_csv",
    "envelope_from_csv",
]

TWO_PI = 2.0 * np.pi

DEFAULT_DT = 0.01          # ns, envelope sample spacing
DEFAULT_CEILING = 1.0      # GHz, waveform-generator amplitude limit


# ---------------------------------------------------------------------------
# envelope container
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Envelope:
    """Complex drive waveform Omega(t) on a uniform time grid.

    samples are in ordinary GHz (cycles/ns); phases ride on the complex
    argument. Immutable: the sample array is copied and marked read-only.
    """

    dt: float
    samples: np.ndarray
    t0: float = 0.0
    ceiling: float = DEFAULT_CEILING
    compensated: bool = False

    def __post_init__(self) -> None:
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        samples = np.ascontiguousarray(self.samples, dtype=complex)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("samples must be a 1-d array with at least 2 points")
        if not np.all(np.isfinite(samples.real)) or not np.all(np.isfinite(samples.imag)):
            raise ValueError("samples must be finite")
        peak = float(np.max(np.abs(samples)))
        if peak > self.ceiling * (1 + 1e-9):
            raise ValueError(
                f"peak amplitude {peak:.6f} GHz exceeds the {self.ceiling:.3f} GHz ceiling"
            )
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    # -- grid ---------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def duration(self) -> float:
        return self.dt * (self.n - 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    def amplitude_max(self) -> float:
        return float(np.max(np.abs(self.samples)))

    # -- evaluation ---------------------------------------------------------

    def __call__(self, t) -> np.ndarray:
        """Linear interpolation of Omega at arbitrary times; 0 outside."""
        t = np.asarray(t, dtype=float)
        re = np.interp(t, self.times, self.samples.real, left=0.0, right=0.0)
        im = np.interp(t, self.times, self.samples.imag, left=0.0, right=0.0)
        return re + 1j * im

    def shifted(self, t0: float) -> "Envelope":
        return replace(self, t0=t0)


def pulse_area(env: Envelope) -> complex:
    """Time integral of Omega(t) in GHz*ns (trapezoid on the native grid)."""
    return complex(np.trapezoid(env.samples, dx=env.dt))


# ---------------------------------------------------------------------------
# elementary shapes
# ---------------------------------------------------------------------------

def _grid(duration: float, dt: float) -> np.ndarray:
    n = int(round(duration / dt))
    if abs(n * dt - duration) > 1e-9:
        raise ValueError(f"duration {duration} ns is not a multiple of dt = {dt} ns")
    return np.arange(n + 1) * dt


def synthesize_sin2(amp: float, duration: float, dt: float = DEFAULT_DT,
                    t0: float = 0.0, ceiling: float = DEFAULT_CEILING) -> Envelope:
    """sin^2 shaping pulse: amp * sin^2(pi t / duration), endpoints exactly 0."""
    if amp < 0:
        raise ValueError("amp must be non-negative")
    if duration <= 0:
        raise ValueError("duration must be positive")
    t = _grid(duration, dt)
    samples = amp * np.sin(np.pi * t / duration) ** 2 + 0j
    samples[0] = 0.0
    samples[-1] = 0.0
    return Envelope(dt=dt, samples=samples, t0=t0, ceiling=ceiling)


def synthesize_square(amp: complex, duration: float, dt: float = DEFAULT_DT,
                      t0: float = 0.0, ceiling: float = DEFAULT_CEILING) -> Envelope:
    """Flat-top calibration pulse of constant complex amplitude."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    t = _grid(duration, dt)
    samples = np.full(t.size, complex(amp))
    return Envelope(dt=dt, samples=samples, t0=t0, ceiling=ceiling)


def gaussian_pulse(amp: complex, sigma: float = 5.0, dt: float = DEFAULT_DT,
                   t0: float = 0.0, n_sigma: float = 3.0,
                   ceiling: float = DEFAULT_CEILING) -> Envelope:
    """Truncated Gaussian preparation pulse, total length 2*n_sigma*sigma.

    The default sigma = 5 ns with 3 sigma on each side gives a 30 ns pulse.
    The tails are cut, not baseline-subtracted, so the endpoints sit at
    exp(-n_sigma^2/2) of the peak (~1.1% for the default).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    duration = 2.0 * n_sigma * sigma
    t = _grid(duration, dt)
    samples = complex(amp) * np.exp(-0.5 * ((t - duration / 2.0) / sigma) ** 2)
    return Envelope(dt=dt, samples=samples, t0=t0, ceiling=ceiling)


# ---------------------------------------------------------------------------
# Stark-shift map and phase compensation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StarkMap:
    """Drive amplitude |Omega| (GHz) -> shift of the two-photon resonance (GHz).

    The grid must start at amplitude 0 with shift 0: with the drive off there
    is nothing to compensate, and the map is relative to the zero-amplitude
    dressed resonance by construction. Interpolation is monotone cubic so the
    compensating phase has a smooth derivative.
    """

    amplitudes: np.ndarray
    shifts: np.ndarray

    def __post_init__(self) -> None:
        amps = np.ascontiguousarray(self.amplitudes, dtype=float)
        shifts = np.ascontiguousarray(self.shifts, dtype=float)
        if amps.ndim != 1 or amps.shape != shifts.shape or amps.size < 2:
            raise ValueError("amplitudes and shifts must be equal-length 1-d arrays (>= 2 points)")
        if not (np.all(np.isfinite(amps)) and np.all(np.isfinite(shifts))):
            raise ValueError("map values must be finite")
        if amps[0] != 0.0:
            raise ValueError("amplitude grid must start at 0")
        if shifts[0] != 0.0:
            raise ValueError("shift at zero amplitude must be 0")
        if np.any(np.diff(amps) <= 0):
            raise ValueError("amplitude grid must be strictly increasing")
        amps.setflags(write=False)
        shifts.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "_interp", PchipInterpolator(amps, shifts, extrapolate=False))

    @property
    def max_amplitude(self) -> float:
        return float(self.amplitudes[-1])

    def shift(self, amplitude) -> np.ndarray:
        """Interpolated shift (GHz); raises outside the calibrated range."""
        a = np.asarray(amplitude, dtype=float)
        if np.any(a < 0) or np.any(a > self.max_amplitude * (1 + 1e-9)):
            raise ValueError(
                f"amplitude outside calibrated range [0, {self.max_amplitude:.4f}] GHz"
            )
        out = self._interp(np.clip(a, 0.0, self.max_amplitude))
        return out if out.ndim else float(out)

    # -- serialization --------------------------------------------------------

    def to_json(self, path: str) -> None:
        payload = {
            "amplitudes_GHz": self.amplitudes.tolist(),
            "shifts_GHz": self.shifts.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def from_json(cls, path: str) -> "StarkMap":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            amplitudes=np.asarray(payload["amplitudes_GHz"], dtype=float),
            shifts=np.asarray(payload["shifts_GHz"], dtype=float),
        )

    @classmethod
    def zero(cls, max_amplitude: float = DEFAULT_CEILING) -> "StarkMap":
        """Identically-zero map (compensation becomes a no-op)."""
        return cls(np.array([0.0, max_amplitude]), np.zeros(2))


def compensate_phase(env: Envelope, stark: StarkMap) -> Envelope:
    """Apply the phase that cancels the amplitude-dependent resonance shift.

    The returned envelope carries phi(t) = -2*pi * integral of
    shift(|Omega(t')|) dt' from the start of the envelope, so the
    instantaneous drive phase derivative tracks minus the shift (in angular
    units) and the two-photon transfer stays on resonance as the pulse
    amplitude varies. |Omega(t)| is unchanged.
    """
    amps = np.abs(env.samples)
    shifts = np.asarray(stark.shift(amps), dtype=float)   # range-checked here
    phase = -TWO_PI * cumulative_trapezoid(shifts, dx=env.dt, initial=0.0)
    samples = env.samples * np.exp(1j * phase)
    return replace(env, samples=samples, compensated=True)


# ---------------------------------------------------------------------------
# pulse trains
# ---------------------------------------------------------------------------

def build_train(peaks: Sequence[Mapping], dt: float = DEFAULT_DT,
                stark: StarkMap | None = None,
                ceiling: float = DEFAULT_CEILING) -> Envelope:
    """Superpose sin^2 peaks, each with its own phase offset.

    Each peak is a mapping with keys ``amp`` (GHz), ``duration`` (ns),
    ``start`` (ns) and optionally ``phase`` (rad, default 0). Overlapping
    peaks add coherently. When a StarkMap is given, phase compensation is
    applied to the composite waveform (the shift follows the composite
    amplitude, not the individual peaks).
    """
    if not peaks:
        raise ValueError("at least one peak is required")
    starts = [float(p["start"]) for p in peaks]
    ends = [float(p["start"]) + float(p["duration"]) for p in peaks]
    t_start = min(starts)
    n = int(round((max(ends) - t_start) / dt))
    samples = np.zeros(n + 1, dtype=complex)
    for p in peaks:
        amp = float(p["amp"])
        duration = float(p["duration"])
        phase = float(p.get("phase", 0.0))
        i0 = int(round((float(p["start"]) - t_start) / dt))
        t = np.arange(int(round(duration / dt)) + 1) * dt
        shape = amp * np.sin(np.pi * t / duration) ** 2
        shape[0] = 0.0
        shape[-1] = 0.0
        samples[i0:i0 + t.size] += shape * np.exp(1j * phase)
    env = Envelope(dt=dt, samples=samples, t0=t_start, ceiling=ceiling)
    return compensate_phase(env, stark) if stark is not None else env


# ---------------------------------------------------------------------------
# transmon preparation sequence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrepPulse:
    """One resonant Gaussian pulse of the preparation sequence.

    transition is 'ge' or 'ef'; the dynamics module drives it in the frame
    rotating at that transition's frequency.
    """

    transition: str
    envelope: Envelope


def build_init_sequence(kind: str, pi_amp_ge: float, pi_amp_ef: float,
                        dt: float = DEFAULT_DT, sigma: float = 5.0) -> list[PrepPulse]:
    """Gaussian qubit pulses preparing |f> or (|g>+|f>)/sqrt(2).

    'prepare_f' plays a pi pulse on g-e then a pi pulse on e-f;
    'prepare_g_plus_f' replaces the first pulse by a half-area (pi/2) pulse.
    On resonance the rotation angle is exactly proportional to the pulse
    area, so the pi/2 amplitude is half the calibrated pi amplitude. Pulses
    are sequential, 2 * 3 sigma long each (60 ns total for sigma = 5 ns).
    """
    if pi_amp_ge <= 0 or pi_amp_ef <= 0:
        raise ValueError("calibrated pi amplitudes must be positive")
    if kind == "prepare_f":
        first_amp = pi_amp_ge
    elif kind == "prepare_g_plus_f":
        first_amp = 0.5 * pi_amp_ge
    else:
        raise ValueError(f"unknown preparation kind: {kind!r}")
    length = 6.0 * sigma
    return [
        PrepPulse("ge", gaussian_pulse(first_amp, sigma=sigma, dt=dt, t0=0.0)),
        PrepPulse("ef", gaussian_pulse(pi_amp_ef, sigma=sigma, dt=dt, t0=length)),
    ]


# ---------------------------------------------------------------------------
# CSV interface
# ---------------------------------------------------------------------------

def envelope_to_csv(env: Envelope, path: str) -> None:
    """Write t_ns, re_Omega_GHz, im_Omega_GHz rows; bit-exact round trip."""
    t = env.times
    with open(path, "w") as fh:
        fh.write("t_ns,re_Omega_GHz,im_Omega_GHz\n")
        for k in range(env.n):
            fh.write(f"{t[k]:.17g},{env.samples[k].real:.17g},{env.samples[k].imag:.17g}\n")


def envelope_from_csv(path: str, ceiling: float = DEFAULT_CEILING) -> Envelope:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
    if data.shape[1] != 3:
        raise ValueError("expected 3 columns: t_ns, re_Omega_GHz, im_Omega_GHz")
    t = data[:, 0]
    dt = (t[-1] - t[0]) / (t.size - 1)
    steps = np.diff(t)
    if np.max(np.abs(steps - dt)) > 1e-9:
        raise ValueError("time column is not uniformly spaced")
    return Envelope(dt=float(dt), samples=data[:, 1] + 1j * data[:, 2],
                    t0=float(t[0]), ceiling=ceiling)
