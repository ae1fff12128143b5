"""Operator algebra for a transmon ladder coupled to a single resonator mode.

Conventions
-----------
* The composite Hilbert space is transmon (x) resonator with a flat,
  transmon-major index: ``idx = level * n_resonator + photons``.
* Transmon levels are labelled ``g, e, f, h, i, j`` in ascending order.
* Operators are dense ``complex128`` numpy arrays; states are density
  matrices of the same dtype. No operator wrapper classes: builders return
  plain arrays, and the lightweight :class:`CompositeBasis` carries the
  dimensions and index bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LEVEL_LABELS",
    "CompositeBasis",
    "transmon_lowering",
    "resonator_lowering",
    "transmon_level_projector",
    "fock_projector",
    "number_operator",
    "basis_ket",
    "basis_density",
    "tensor_density",
    "expect",
    "partial_trace_resonator",
    "partial_trace_transmon",
    "assert_density_matrix",
]

LEVEL_LABELS = "gefhij"


@dataclass(frozen=True)
class CompositeBasis:
    """Dimensions and index maps of the transmon (x) resonator space."""

    n_transmon: int = 6
    n_resonator: int = 3

    def __post_init__(self) -> None:
        if self.n_transmon < 2:
            raise ValueError("n_transmon must be at least 2")
        if self.n_resonator < 2:
            raise ValueError("n_resonator must be at least 2")
        if self.n_transmon > len(LEVEL_LABELS):
            raise ValueError(
                f"n_transmon={self.n_transmon} exceeds the {len(LEVEL_LABELS)} "
                "supported ladder labels"
            )

    @property
    def dim(self) -> int:
        return self.n_transmon * self.n_resonator

    def index(self, level: int | str, photons: int) -> int:
        """Flat index of transmon ``level`` with ``photons`` in the resonator."""
        lvl = self.level_number(level)
        if not 0 <= photons < self.n_resonator:
            raise ValueError(f"photon number {photons} outside 0..{self.n_resonator - 1}")
        return lvl * self.n_resonator + photons

    def level_number(self, level: int | str) -> int:
        if isinstance(level, str):
            try:
                num = LEVEL_LABELS.index(level)
            except ValueError:
                raise ValueError(f"unknown transmon label {level!r}") from None
        else:
            num = level
        if not 0 <= num < self.n_transmon:
            raise ValueError(f"transmon level {level!r} outside 0..{self.n_transmon - 1}")
        return num

    def label(self, idx: int) -> str:
        """Human-readable label ('f0', 'g1', ...) of a flat index."""
        level, photons = divmod(idx, self.n_resonator)
        return f"{LEVEL_LABELS[level]}{photons}"

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(self.dim)]


def _bare_lowering(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def transmon_lowering(basis: CompositeBasis) -> np.ndarray:
    """Ladder operator b = sum_k sqrt(k) |k-1><k| on the composite space."""
    return np.kron(_bare_lowering(basis.n_transmon), np.eye(basis.n_resonator, dtype=complex))


def resonator_lowering(basis: CompositeBasis) -> np.ndarray:
    """Photon annihilation operator a on the composite space."""
    return np.kron(np.eye(basis.n_transmon, dtype=complex), _bare_lowering(basis.n_resonator))


def transmon_level_projector(basis: CompositeBasis, level: int | str) -> np.ndarray:
    """|level><level| (x) identity."""
    lvl = basis.level_number(level)
    p = np.zeros((basis.n_transmon, basis.n_transmon), dtype=complex)
    p[lvl, lvl] = 1.0
    return np.kron(p, np.eye(basis.n_resonator, dtype=complex))


def fock_projector(basis: CompositeBasis, photons: int) -> np.ndarray:
    """Identity (x) |photons><photons|."""
    if not 0 <= photons < basis.n_resonator:
        raise ValueError(f"photon number {photons} outside 0..{basis.n_resonator - 1}")
    p = np.zeros((basis.n_resonator, basis.n_resonator), dtype=complex)
    p[photons, photons] = 1.0
    return np.kron(np.eye(basis.n_transmon, dtype=complex), p)


def number_operator(basis: CompositeBasis) -> np.ndarray:
    """Total excitation counter b†b + a†a."""
    b = transmon_lowering(basis)
    a = resonator_lowering(basis)
    return b.conj().T @ b + a.conj().T @ a


def basis_ket(basis: CompositeBasis, level: int | str, photons: int) -> np.ndarray:
    ket = np.zeros(basis.dim, dtype=complex)
    ket[basis.index(level, photons)] = 1.0
    return ket


def basis_density(basis: CompositeBasis, level: int | str, photons: int) -> np.ndarray:
    ket = basis_ket(basis, level, photons)
    return np.outer(ket, ket.conj())


def tensor_density(rho_transmon: np.ndarray, rho_resonator: np.ndarray) -> np.ndarray:
    """Composite density matrix from transmon and resonator factors."""
    return np.kron(np.asarray(rho_transmon, dtype=complex), np.asarray(rho_resonator, dtype=complex))


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    """Tr(op rho) with a dimension check."""
    op = np.asarray(op)
    rho = np.asarray(rho)
    if op.shape != rho.shape or op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"dimension mismatch: op {op.shape} vs state {rho.shape}")
    # trace of a product without forming it
    return complex(np.sum(op.T * rho))


def _as_blocks(rho: np.ndarray, basis: CompositeBasis) -> np.ndarray:
    d = basis.dim
    if rho.shape != (d, d):
        raise ValueError(f"state shape {rho.shape} does not match basis dim {d}")
    return rho.reshape(basis.n_transmon, basis.n_resonator, basis.n_transmon, basis.n_resonator)


def partial_trace_resonator(rho: np.ndarray, basis: CompositeBasis) -> np.ndarray:
    """Trace out the resonator, leaving the transmon density matrix."""
    return np.einsum("injn->ij", _as_blocks(np.asarray(rho, dtype=complex), basis))


def partial_trace_transmon(rho: np.ndarray, basis: CompositeBasis) -> np.ndarray:
    """Trace out the transmon, leaving the resonator density matrix."""
    return np.einsum("inim->nm", _as_blocks(np.asarray(rho, dtype=complex), basis))


def assert_density_matrix(rho: np.ndarray, tol_herm: float = 1e-10,
                          tol_trace: float = 1e-9, tol_eig: float = 1e-9) -> None:
    """Raise ValueError unless rho is Hermitian, unit-trace and PSD within tolerance."""
    rho = np.asarray(rho)
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > tol_herm:
        raise ValueError(f"state not Hermitian: max |rho - rho^+| = {herm:.3e}")
    tr = abs(np.trace(rho) - 1.0)
    if tr > tol_trace:
        raise ValueError(f"state trace deviates from 1 by {tr:.3e}")
    lowest = float(np.linalg.eigvalsh(rho)[0])
    if lowest < -tol_eig:
        raise ValueError(f"state has negative eigenvalue {lowest:.3e}")
