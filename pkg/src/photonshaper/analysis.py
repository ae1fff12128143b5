"""Temporal-mode analysis of emission records.

Everything here operates on plain (times, values) arrays so the routines work
equally on simulated output records, filtered measurement traces, or synthetic
waveforms. Conventions: times in ns, frequencies in GHz, mode functions are
L2-normalized with the trapezoid rule on the supplied grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModeFunction",
    "mode_function",
    "symmetry_parameter",
    "fourier_spectrum",
    "spectral_peak",
    "matched_filter",
    "phase_flatness",
    "main_lobe",
]


# ---------------------------------------------------------------------------
# mode extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeFunction:
    """A normalized temporal mode psi(t) extracted from an emission record.

    ``norm_raw`` keeps the L2 norm of the raw input before normalization:
    for the mean-field route that is |<A>| of the self-referenced mode, for
    the power route it is sqrt of the emitted photon number.
    """

    times: np.ndarray
    values: np.ndarray
    route: str
    norm_raw: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or v.shape != t.shape:
            raise ValueError("times and values must be matching 1-d arrays")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def _l2norm(times, values) -> float:
    return float(np.sqrt(np.trapezoid(np.abs(values) ** 2, times)))


def mode_function(times, a_out, route: str = "mean_field",
                  power=None) -> ModeFunction:
    """Extract the temporal mode from an output record.

    route='mean_field': psi proportional to the record <a_out(t)> (magnitude
    and phase). Requires a record with nonvanishing coherence, i.e. a
    superposition-protocol run; a Fock-protocol record has zero mean field
    and raises.

    route='power': |psi| from the true emitted power kappa*<a^dag a>(t)
    (pass it as ``power``), phase set to zero. Works for any protocol but
    carries no phase information.
    """
    times = np.asarray(times, dtype=float)
    if route == "mean_field":
        vals = np.asarray(a_out, dtype=complex)
        nrm = _l2norm(times, vals)
        if nrm < 1e-12:
            raise ValueError(
                "mean field has zero norm; use route='power' for records "
                "without a coherent reference branch")
        return ModeFunction(times, vals / nrm, "mean_field", nrm)
    if route == "power":
        if power is None:
            raise ValueError("route='power' requires the power array")
        w = np.asarray(power, dtype=float)
        if np.any(w < -1e-12):
            raise ValueError("power must be nonnegative")
        w = np.clip(w, 0.0, None)
        total = np.trapezoid(w, times)
        if total < 1e-15:
            raise ValueError("record carries no emitted power")
        vals = np.sqrt(w / total).astype(complex)
        return ModeFunction(times, vals, "power", float(np.sqrt(total)))
    raise ValueError(f"unknown route {route!r}")


# ---------------------------------------------------------------------------
# time-reversal symmetry
# ---------------------------------------------------------------------------

def _reflect_overlap(times, psi, norm):
    def s_of(t0: float) -> float:
        tr = 2.0 * t0 - times
        re = np.interp(tr, times, psi.real, left=0.0, right=0.0)
        im = np.interp(tr, times, psi.imag, left=0.0, right=0.0)
        return float(abs(np.trapezoid((re - 1j * im) * psi, times)) / norm)
    return s_of


def symmetry_parameter(times, values, t0_tol: float = 0.01):
    """Time-reversal symmetry s = max_t0 |int psi*(2 t0 - t) psi(t) dt|.

    The overlap of the mode with its time reverse, maximized over the
    reflection center t0 (coarse grid then golden-section refinement to
    ``t0_tol`` ns). s = 1 for any envelope symmetric about some instant,
    regardless of translation or global phase. Returns (s, t0_best).
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(values, dtype=complex)
    norm = np.trapezoid(np.abs(psi) ** 2, times)
    if norm < 1e-18:
        raise ValueError("mode has zero norm")
    s_of = _reflect_overlap(times, psi, norm)

    t0s = np.linspace(times[0], times[-1], 201)
    vals = np.array([s_of(t) for t in t0s])
    i = int(np.argmax(vals))
    a = t0s[max(0, i - 1)]
    b = t0s[min(len(t0s) - 1, i + 1)]
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - gr * (b - a), a + gr * (b - a)
    while (b - a) > t0_tol:
        if s_of(c) > s_of(d):
            b, d = d, c
            c = b - gr * (b - a)
        else:
            a, c = c, d
            d = a + gr * (b - a)
    t0 = 0.5 * (a + b)
    return float(s_of(t0)), float(t0)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def fourier_spectrum(times, values, pad_factor: int = 16):
    """Power spectrum |psi(f)|^2 of a record, frequencies in GHz.

    The input is assumed demodulated (as produced by the propagator), so a
    photon sitting at the demodulation frequency peaks at f = 0. Zero padding
    by ``pad_factor`` refines the FFT grid; peak location to sub-bin accuracy
    is the job of spectral_peak. Returns (freqs, spectrum), both sorted in
    increasing frequency, spectrum normalized to unit maximum.
    """
    times = np.asarray(times, dtype=float)
    vals = np.asarray(values, dtype=complex)
    if len(times) < 4:
        raise ValueError("record too short for a spectrum")
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=1e-6, atol=1e-12):
        raise ValueError("spectrum requires a uniform time grid")
    n = int(pad_factor) * len(vals)
    spec = np.fft.fftshift(np.fft.fft(vals, n=n)) * dt
    freqs = np.fft.fftshift(np.fft.fftfreq(n, d=dt))
    power = np.abs(spec) ** 2
    pmax = power.max()
    if pmax <= 0.0:
        raise ValueError("record carries no power")
    return freqs, power / pmax


def spectral_peak(freqs, spectrum) -> float:
    """Peak frequency with three-point quadratic interpolation (GHz)."""
    freqs = np.asarray(freqs, dtype=float)
    power = np.asarray(spectrum, dtype=float)
    i = int(np.argmax(power))
    if i == 0 or i == len(power) - 1:
        return float(freqs[i])
    y0, y1, y2 = power[i - 1], power[i], power[i + 1]
    denom = y0 - 2.0 * y1 + y2
    if abs(denom) < 1e-300:
        return float(freqs[i])
    shift = 0.5 * (y0 - y2) / denom
    df = freqs[i + 1] - freqs[i]
    return float(freqs[i] + shift * df)


# ---------------------------------------------------------------------------
# matched filtering
# ---------------------------------------------------------------------------

def matched_filter(mode_times, mode_values, times, a_out) -> complex:
    """Project a record onto a temporal mode: A = int psi*(t) a_out(t) dt.

    The record is interpolated onto the mode grid (zero outside its support).
    With a unit-norm psi this is the temporal-mode quadrature amplitude the
    moment pipeline consumes.
    """
    mt = np.asarray(mode_times, dtype=float)
    mv = np.asarray(mode_values, dtype=complex)
    t = np.asarray(times, dtype=float)
    a = np.asarray(a_out, dtype=complex)
    re = np.interp(mt, t, a.real, left=0.0, right=0.0)
    im = np.interp(mt, t, a.imag, left=0.0, right=0.0)
    return complex(np.trapezoid(np.conj(mv) * (re + 1j * im), mt))


# ---------------------------------------------------------------------------
# phase flatness
# ---------------------------------------------------------------------------

def main_lobe(times, a_out, power_floor: float = 0.01):
    """Index slice of the contiguous window where |a_out|^2 >= floor * peak.

    The window brackets the emitted photon and excludes the front ramp and
    the post-emission region where the mean field has decayed into numerical
    noise or weak off-frequency contamination (the residual drive-frequency
    cavity displacement); both ends are found from the outermost crossings.
    """
    w = np.abs(np.asarray(a_out, dtype=complex)) ** 2
    wmax = w.max()
    if wmax <= 0.0:
        raise ValueError("record carries no power")
    big = w >= power_floor * wmax
    i0 = int(np.argmax(big))
    i1 = len(big) - int(np.argmax(big[::-1]))
    return slice(i0, i1)


def phase_flatness(times, a_out, power_floor: float = 0.01) -> float:
    """Power-weighted standard deviation (rad) of the record phase.

    Restricted to the contiguous main power lobe (see main_lobe): outside it
    the mean field underflows and unwrapping across the noise floor can wind
    arbitrary multiples of 2*pi into the statistic. The lobe carries > 99% of
    the emitted energy for the pulse shapes of interest. Only records with a
    coherent mean field have a phase; a Fock-protocol record does not (its
    field coherence vanishes without the vacuum reference branch).
    """
    a = np.asarray(a_out, dtype=complex)
    sel = main_lobe(times, a, power_floor)
    ph = np.unwrap(np.angle(a[sel]))
    w = np.abs(a[sel]) ** 2
    mean = np.sum(w * ph) / np.sum(w)
    return float(np.sqrt(np.sum(w * (ph - mean) ** 2) / np.sum(w)))
