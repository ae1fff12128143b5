"""Device model: circuit parameters, rotating-frame Hamiltonian, dressed states.

The transmon is treated as a Kerr ladder (harmonic ladder operator b with a
self-Kerr term) coupled to a single resonator mode through an excitation
exchange term. Everything is expressed in the frame rotating at the drive
frequency, where the two-photon f0 <-> g1 transition is stationary:

    H/hbar = dq b'b + (alpha/2) b'b'bb + dr a'a + g (a b' + a' b)
             + (conj(Omega(t)) b + Omega(t) b') / 2

with detunings dq = omega_q - omega_d and dr = omega_r - omega_d, and the
drive frequency omega_d = 2 omega_q + alpha - omega_r chosen so that the bare
f0 and g1 levels are degenerate in the frame.

Units: all public inputs/outputs are ordinary frequencies in GHz and times in
ns; Hamiltonians and rates returned to the integrator are angular (rad/ns).
The conversion (a factor 2*pi) happens inside the builders, nowhere else.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .operators import CompositeBasis, resonator_lowering, transmon_lowering

__all__ = [
    "DeviceParams",
    "paper_device",
    "TWO_PI",
    "detunings",
    "drive_frequency",
    "zero_drive_offset",
    "build_hamiltonian",
    "effective_coupling_perturbative",
    "DressedSpectrum",
    "dressed_f0g1_block",
    "dressed_spectrum",
    "effective_coupling_exact",
    "f0g1_resonance_offset",
    "LabelTrackingError",
    "ChargeBasisResult",
    "transmon_charge_basis",
    "solve_ej_for_frequency",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DeviceParams:
    """Static circuit parameters (ordinary GHz / ns units).

    Defaults are the measured values of the device this package models.
    """

    omega_q: float = 8.640    # g->e transition frequency (GHz)
    omega_r: float = 7.224    # resonator frequency (GHz)
    g: float = 0.035          # exchange coupling (GHz)
    alpha: float = -0.421     # transmon anharmonicity (GHz, negative)
    kappa: float = 0.024      # resonator linewidth (GHz)
    t1_e: float = 2000.0      # e-level lifetime (ns)
    t1_f: float = 550.0       # f-level lifetime (ns)
    t2_ge: float = 1640.0     # g-e coherence time (ns)
    t2_ef: float = 557.0      # e-f coherence time (ns), diagnostic only
    t2_gf: float = 580.0      # g-f coherence time (ns)
    n_transmon: int = 6
    n_resonator: int = 3

    def __post_init__(self) -> None:
        if self.omega_q <= self.omega_r:
            raise ValueError("omega_q must exceed omega_r (positive qubit-resonator detuning)")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.alpha >= 0:
            raise ValueError("alpha must be negative")
        if abs(self.alpha) >= self.omega_q:
            raise ValueError("|alpha| must be small compared to omega_q")
        for name in ("t1_e", "t1_f", "t2_ge", "t2_ef", "t2_gf"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        # basis constructor validates the level counts
        CompositeBasis(self.n_transmon, self.n_resonator)

    @property
    def basis(self) -> CompositeBasis:
        return CompositeBasis(self.n_transmon, self.n_resonator)

    @property
    def delta(self) -> float:
        """Qubit-resonator detuning omega_q - omega_r (GHz)."""
        return self.omega_q - self.omega_r


def paper_device(**overrides) -> DeviceParams:
    """The default device; keyword overrides replace individual fields."""
    return replace(DeviceParams(), **overrides) if overrides else DeviceParams()


def drive_frequency(params: DeviceParams) -> float:
    """Two-photon drive frequency 2 omega_q + alpha - omega_r (GHz)."""
    return 2.0 * params.omega_q + params.alpha - params.omega_r


def detunings(params: DeviceParams, drive_offset: float = 0.0) -> tuple[float, float]:
    """Frame detunings (dq, dr) in GHz for a drive at drive_frequency + offset."""
    omega_d = drive_frequency(params) + drive_offset
    return params.omega_q - omega_d, params.omega_r - omega_d


def zero_drive_offset(params: DeviceParams) -> float:
    """Drive-frequency correction (GHz) centering the emitted photon.

    The exchange coupling g dresses the levels even with the drive off: f0
    is pushed up through e1 and g1 pushed down through e0, so at the nominal
    two-photon frequency the emitted photon would sit a few MHz off the
    resonator frequency and its record would carry a slow phase ramp.
    Driving at drive_frequency(params) + zero_drive_offset(params) makes the
    zero-amplitude photon frequency coincide with the resonator frequency
    (the quantity the emitted-photon-spectrum calibration zeroes); the
    amplitude-dependent part is then handled by pulse-phase compensation.

    The condition is that the dressed f0 - g0 splitting equals the frame's
    resonator detuning. Both sides are exactly linear in the drive offset
    (f0 carries two drive quanta, the detuning one), so the correction is
    computed in closed form from one zero-drive diagonalization. The f0-g1
    transfer is then deliberately left a fraction of a MHz off its own
    dressed resonance, far inside the kappa-broadened linewidth.
    """
    basis = params.basis
    vals, vecs = _eigh_sorted(build_hamiltonian(params, 0.0, 0.0))
    i_f0 = int(np.argmax(np.abs(vecs[basis.index("f", 0), :]) ** 2))
    i_g0 = int(np.argmax(np.abs(vecs[basis.index("g", 0), :]) ** 2))
    e_f0 = vals[i_f0] / TWO_PI
    e_g0 = vals[i_g0] / TWO_PI
    return (e_f0 - e_g0) - detunings(params, 0.0)[1]


def build_hamiltonian(params: DeviceParams, omega_drive: complex = 0.0,
                      drive_offset: float = 0.0) -> np.ndarray:
    """Rotating-frame Hamiltonian in rad/ns for a fixed drive amplitude.

    Parameters
    ----------
    omega_drive : complex
        Drive amplitude Omega in ordinary GHz; its phase is the drive phase.
    drive_offset : float
        Deliberate drive-frequency offset from the two-photon resonance (GHz).
    """
    basis = params.basis
    b = transmon_lowering(basis)
    a = resonator_lowering(basis)
    bd, ad = b.conj().T, a.conj().T
    dq, dr = detunings(params, drive_offset)
    h = (
        dq * (bd @ b)
        + 0.5 * params.alpha * (bd @ bd @ b @ b)
        + dr * (ad @ a)
        + params.g * (a @ bd + ad @ b)
        + 0.5 * (np.conj(omega_drive) * b + omega_drive * bd)
    )
    return TWO_PI * h


def effective_coupling_perturbative(params: DeviceParams, omega_drive: complex) -> complex:
    """Leading-order f0-g1 coupling gtilde (GHz, complex, tracks drive phase).

        gtilde = g alpha Omega / (sqrt(2) Delta (Delta + alpha))

    Valid deep in the dispersive regime; warns when |Delta| or |Delta+alpha|
    is not large against g, or when the result leaves the perturbative window
    |gtilde| <= |alpha|/10.
    """
    delta = params.delta
    if abs(delta) < 1e-12 or abs(delta + params.alpha) < 1e-12:
        raise ValueError("singular detuning: Delta and Delta+alpha must be nonzero")
    if abs(delta) < 10 * params.g or abs(delta + params.alpha) < 10 * params.g:
        warnings.warn(
            "dispersive-regime assumption marginal: |Delta| or |Delta+alpha| "
            "is not large compared to g",
            stacklevel=2,
        )
    gt = params.g * params.alpha * omega_drive / (np.sqrt(2.0) * delta * (delta + params.alpha))
    if abs(gt) > abs(params.alpha) / 10.0:
        warnings.warn(
            f"|gtilde| = {abs(gt) * 1e3:.1f} MHz exceeds |alpha|/10; the "
            "second-order treatment degrades at this drive strength",
            stacklevel=2,
        )
    return complex(gt)


class LabelTrackingError(RuntimeError):
    """Adiabatic label tracking lost an eigenstate despite step refinement."""


@dataclass(frozen=True)
class DressedSpectrum:
    """Dressed levels at one drive amplitude, labelled by their bare origin."""

    omega_drive: float                 # GHz
    energies: dict[str, float]         # bare label -> dressed energy (GHz)
    delta_f0g1: float                  # Stark shift of f0 relative to g1 (GHz)
    gtilde_exact: float | None = None  # |gtilde| from the splitting minimum (GHz)


def _eigh_sorted(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(h)
    return vals, vecs


def dressed_f0g1_block(params: DeviceParams, omega_drive: complex,
                       drive_offset: float = 0.0) -> tuple[float, complex]:
    """Diabatic 2x2 reduction of the driven spectrum onto the f0/g1 pair.

    Diagonalizes the full Hamiltonian, picks the two eigenvectors with the
    largest total weight on span{|f0>, |g1>}, and re-expresses the projected
    Hamiltonian in the orthonormalized projections of the bare states.

    Returns
    -------
    (delta_f0g1, gtilde) : (float, complex)
        Diagonal mismatch H_ff - H_gg and off-diagonal coupling, both in GHz.
        This stays well-defined arbitrarily close to the f0-g1 resonance,
        where raw adiabatic labels are meaningless because the pair is mixed
        by gtilde itself.
    """
    basis = params.basis
    h = build_hamiltonian(params, omega_drive, drive_offset)
    vals, vecs = _eigh_sorted(h)
    i_f0 = basis.index("f", 0)
    i_g1 = basis.index("g", 1)
    weights = np.abs(vecs[i_f0, :]) ** 2 + np.abs(vecs[i_g1, :]) ** 2
    pair = np.argsort(weights)[-2:]
    span = vecs[:, pair]                      # dim x 2, invariant subspace
    evals = vals[pair]
    # orthonormalized projections of the bare states onto the pair subspace
    cf = span.conj().T @ _unit(basis.dim, i_f0)
    cg = span.conj().T @ _unit(basis.dim, i_g1)
    f_vec = cf / np.linalg.norm(cf)
    g_vec = cg - (f_vec.conj() @ cg) * f_vec
    ng = np.linalg.norm(g_vec)
    if ng < 1e-6:
        raise LabelTrackingError(
            f"f0/g1 projections degenerate at Omega = {abs(omega_drive):.3f} GHz"
        )
    g_vec = g_vec / ng
    h2 = np.array(
        [
            [f_vec.conj() @ (evals * f_vec), f_vec.conj() @ (evals * g_vec)],
            [g_vec.conj() @ (evals * f_vec), g_vec.conj() @ (evals * g_vec)],
        ]
    )
    delta = float((h2[0, 0] - h2[1, 1]).real) / TWO_PI
    gtilde = complex(h2[0, 1]) / TWO_PI
    return delta, gtilde


def _unit(dim: int, idx: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[idx] = 1.0
    return v


def dressed_spectrum(params: DeviceParams, omega_drive: float,
                     amp_step: float = 0.010, drive_offset: float = 0.0,
                     with_exact_coupling: bool = True) -> DressedSpectrum:
    """Adiabatically tracked dressed levels at drive amplitude ``omega_drive``.

    Eigenstates are followed from Omega = 0 upward in steps of ``amp_step``
    (GHz), matching each step's eigenvectors to the previous ones by maximal
    overlap; a step whose best overlap drops below 0.5 is halved, and the
    sweep fails with :class:`LabelTrackingError` if halving six times does
    not recover.
    """
    basis = params.basis
    dim = basis.dim
    labels = basis.labels()

    h0 = build_hamiltonian(params, 0.0, drive_offset)
    vals, vecs = _eigh_sorted(h0)
    # at zero drive the eigenvectors are (numerically) bare states up to the
    # g-hybridization; label each eigenvector by its dominant bare component
    order = np.argmax(np.abs(vecs) ** 2, axis=0)
    if len(set(order.tolist())) != dim:
        raise LabelTrackingError("bare-state labelling ambiguous at zero drive")
    tracked_vecs = vecs[:, np.argsort(order)]
    tracked_vals = vals[np.argsort(order)]

    target = float(abs(omega_drive))
    amp = 0.0
    step = float(amp_step)
    halvings = 0
    while amp < target - 1e-12:
        trial = min(target, amp + step)
        vals, vecs = _eigh_sorted(build_hamiltonian(params, trial, drive_offset))
        overlap = np.abs(tracked_vecs.conj().T @ vecs) ** 2   # prev x new
        best = np.argmax(overlap, axis=1)
        ok = len(set(best.tolist())) == dim and all(
            overlap[k, best[k]] >= 0.5 for k in range(dim)
        )
        if not ok:
            halvings += 1
            if halvings > 6:
                raise LabelTrackingError(
                    f"label tracking failed near Omega = {trial:.4f} GHz "
                    f"(step {step:.5f} GHz)"
                )
            step /= 2.0
            continue
        tracked_vecs = vecs[:, best]
        tracked_vals = vals[best]
        amp = trial

    energies = {labels[k]: float(tracked_vals[k]) / TWO_PI for k in range(dim)}
    if with_exact_coupling:
        delta, gtilde = _splitting_minimum(params, target, drive_offset)
    else:
        delta, _ = dressed_f0g1_block(params, target, drive_offset)
        gtilde = None
    return DressedSpectrum(
        omega_drive=target, energies=energies, delta_f0g1=delta, gtilde_exact=gtilde
    )


def _splitting_minimum(params: DeviceParams, omega_drive: float,
                       drive_offset: float = 0.0) -> tuple[float, float]:
    """Locate the f0-g1 avoided crossing by scanning the drive detuning.

    Returns ``(offset_at_minimum, half_gap)`` in GHz, both relative to
    ``drive_frequency(params) + drive_offset``. The scan is seeded by the
    diabatic 2x2 estimate but does not trust it: at strong drive the
    projected block's entries are contaminated by leakage out of the f0/g1
    span, while the splitting minimum of the exact spectrum is not.
    """
    basis = params.basis
    omega = float(abs(omega_drive))
    delta_est, gt_est = dressed_f0g1_block(params, omega, drive_offset)

    def gap(offset: float) -> float:
        vals, vecs = _eigh_sorted(
            build_hamiltonian(params, omega, drive_offset + offset)
        )
        w = (
            np.abs(vecs[basis.index("f", 0), :]) ** 2
            + np.abs(vecs[basis.index("g", 1), :]) ** 2
        )
        pair = np.argsort(w)[-2:]
        return float(abs(vals[pair[0]] - vals[pair[1]])) / TWO_PI

    half_window = max(6.0 * abs(gt_est), 0.2 * abs(delta_est), 0.002)
    res = minimize_scalar(
        gap,
        bounds=(delta_est - half_window, delta_est + half_window),
        method="bounded",
        options={"xatol": 1e-7},
    )
    return float(res.x), 0.5 * float(res.fun)


def effective_coupling_exact(params: DeviceParams, omega_drive: float,
                             drive_offset: float = 0.0) -> float:
    """|gtilde| (GHz) as half the minimum f0-g1 splitting over drive detuning.

    The drive frequency is scanned around the value that cancels the Stark
    shift; at the avoided crossing the splitting of the two dressed states
    carrying the f0/g1 pair equals 2|gtilde|.
    """
    if abs(omega_drive) == 0.0:
        return 0.0
    return _splitting_minimum(params, omega_drive, drive_offset)[1]


def f0g1_resonance_offset(params: DeviceParams, omega_drive: float,
                          drive_offset: float = 0.0) -> float:
    """Drive offset (GHz) centering the f0-g1 avoided crossing.

    This is the dynamical Stark shift of the two-photon transfer resonance:
    the detuning one would add to the drive to sit exactly on the dressed
    f0-g1 resonance at amplitude ``omega_drive``, measured relative to
    ``drive_frequency(params) + drive_offset``. It is the model counterpart
    of the spectroscopic dip position of a square-pulse transfer scan, and
    it is what pulse-phase compensation must track (relative to its own
    zero-amplitude value, which a calibrated operating point leaves a
    fraction of a MHz away from zero on purpose - see
    :func:`zero_drive_offset`).
    """
    return _splitting_minimum(params, omega_drive, drive_offset)[0]


# ---------------------------------------------------------------------------
# charge-basis transmon
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChargeBasisResult:
    """Exact transmon diagonalization summary (GHz units)."""

    e_c: float
    e_j: float
    n_g: float
    energies: np.ndarray       # lowest levels, ground state at 0
    ladder_elements: np.ndarray  # |<k-1| n |k>| normalized so element 1 -> 1
    n_charge: int

    @property
    def omega_ge(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def anharmonicity(self) -> float:
        return float(self.energies[2] - 2 * self.energies[1] + self.energies[0])


def _charge_hamiltonian(e_c: float, e_j: float, n_g: float, n_charge: int) -> np.ndarray:
    n = np.arange(-n_charge, n_charge + 1, dtype=float)
    h = np.diag(4.0 * e_c * (n - n_g) ** 2)
    off = -0.5 * e_j * np.ones(len(n) - 1)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def transmon_charge_basis(e_c: float, e_j: float, n_g: float = 0.0,
                          n_levels: int = 6, n_charge: int = 15) -> ChargeBasisResult:
    """Diagonalize 4 E_C (n - n_g)^2 - E_J cos(phi) in a truncated charge basis.

    The truncation is grown automatically until the retained levels are
    converged to 1e-6 GHz (the requested ``n_charge`` is a floor, minimum 15).
    """
    if e_c <= 0 or e_j <= 0:
        raise ValueError("E_C and E_J must be positive")
    if e_j / e_c < 20:
        warnings.warn(
            f"E_J/E_C = {e_j / e_c:.1f} is below the transmon regime (~20+); "
            "charge dispersion will be significant",
            stacklevel=2,
        )
    n_c = max(int(n_charge), 15)
    prev = None
    while True:
        vals, vecs = np.linalg.eigh(_charge_hamiltonian(e_c, e_j, n_g, n_c))
        levels = vals[:n_levels] - vals[0]
        if prev is not None and np.max(np.abs(levels - prev)) < 1e-6:
            break
        if n_c > 200:
            raise RuntimeError("charge-basis truncation did not converge")
        prev = levels
        n_c += 5
    n_op = np.diag(np.arange(-n_c, n_c + 1, dtype=float) - n_g)
    elems = np.empty(n_levels - 1)
    for k in range(1, n_levels):
        elems[k - 1] = abs(vecs[:, k - 1] @ n_op @ vecs[:, k])
    elems = elems / elems[0]
    return ChargeBasisResult(
        e_c=e_c, e_j=e_j, n_g=n_g, energies=levels,
        ladder_elements=elems, n_charge=n_c,
    )


def solve_ej_for_frequency(e_c: float, target_omega_ge: float,
                           n_g: float = 0.0) -> float:
    """E_J (GHz) that reproduces a target g-e frequency at given E_C."""
    # transmon estimate omega_ge ~ sqrt(8 E_C E_J) - E_C brackets the root
    guess = (target_omega_ge + e_c) ** 2 / (8.0 * e_c)

    def err(e_j: float) -> float:
        return transmon_charge_basis(e_c, e_j, n_g, n_levels=3).omega_ge - target_omega_ge

    lo, hi = 0.5 * guess, 2.0 * guess
    return float(brentq(err, lo, hi, xtol=1e-9))
