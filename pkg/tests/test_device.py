import numpy as np
import pytest

from photonshaper.device import (DeviceParams, dressed_f0g1_block,
                                 drive_frequency, effective_coupling_exact,
                                 effective_coupling_perturbative,
                                 f0g1_resonance_offset, paper_device,
                                 solve_ej_for_frequency,
                                 transmon_charge_basis, zero_drive_offset)
from photonshaper.operators import transmon_lowering


# ---------------------------------------------------------------------------
# parameter container
# ---------------------------------------------------------------------------

def test_paper_device_values():
    dev = paper_device()
    assert dev.omega_q == pytest.approx(8.640)
    assert dev.omega_r == pytest.approx(7.224)
    assert dev.g == pytest.approx(0.035)
    assert dev.alpha == pytest.approx(-0.421)
    assert dev.kappa == pytest.approx(0.024)
    assert dev.basis.dim == 18


def test_paper_device_overrides():
    dev = paper_device(kappa=0.030, t1_e=1500.0)
    assert dev.kappa == pytest.approx(0.030)
    assert dev.t1_e == pytest.approx(1500.0)


@pytest.mark.parametrize("bad", [
    {"kappa": 0.0},
    {"kappa": -0.01},
    {"alpha": 0.3},
    {"omega_r": 9.0},       # resonator above the qubit
    {"t1_e": -10.0},
    {"t2_ge": 0.0},
])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        paper_device(**bad)


def test_drive_frequency_two_photon_condition():
    # omega_d = 2 omega_q + alpha - omega_r for the f0-g1 process
    dev = paper_device()
    assert drive_frequency(dev) == pytest.approx(9.635, abs=1e-12)


def test_delta_is_qubit_resonator_detuning():
    dev = paper_device()
    assert dev.delta == pytest.approx(1.416, abs=1e-12)


# ---------------------------------------------------------------------------
# Hamiltonian builder
# ---------------------------------------------------------------------------

def test_hamiltonian_hermitian():
    from photonshaper.device import build_hamiltonian
    dev = paper_device()
    h = build_hamiltonian(dev, 0.3 * np.exp(0.7j), drive_offset=1e-3)
    assert np.allclose(h, h.conj().T, atol=1e-12)


def test_drive_term_linear_in_amplitude():
    from photonshaper.device import build_hamiltonian
    dev = paper_device()
    h0 = build_hamiltonian(dev, 0.0)
    omega = 0.25 * np.exp(-1.1j)
    d1 = build_hamiltonian(dev, omega) - h0
    d2 = build_hamiltonian(dev, 2 * omega) - h0
    assert np.allclose(d2, 2 * d1, atol=1e-12)

    # charge drive on the transmon: 0.5 (conj(Omega) b + Omega b^dag),
    # angular units inside the builder
    b = transmon_lowering(dev.basis)
    expected = np.pi * (np.conj(omega) * b + omega * b.conj().T)
    # factor 2 pi for GHz -> rad/ns, times the 1/2 of the rotating frame
    assert np.allclose(d1, expected, atol=1e-12)


# ---------------------------------------------------------------------------
# effective f0-g1 coupling
# ---------------------------------------------------------------------------

def test_perturbative_coupling_values():
    dev = paper_device()
    g1 = effective_coupling_perturbative(dev, 0.7)
    g2 = effective_coupling_perturbative(dev, 0.6)
    assert abs(g1) * 1e3 == pytest.approx(5.1766, abs=2e-3)
    assert abs(g2) * 1e3 == pytest.approx(4.4371, abs=2e-3)


def test_perturbative_coupling_tracks_drive_phase():
    dev = paper_device()
    base = effective_coupling_perturbative(dev, 0.5)
    rotated = effective_coupling_perturbative(dev, 0.5 * np.exp(0.9j))
    assert rotated == pytest.approx(base * np.exp(0.9j))


def test_exact_coupling_values():
    dev = paper_device()
    assert effective_coupling_exact(dev, 0.7) * 1e3 == pytest.approx(
        5.5348, abs=0.02)
    assert effective_coupling_exact(dev, 0.6) * 1e3 == pytest.approx(
        4.6450, abs=0.02)


def test_exact_exceeds_perturbative_moderately():
    # the numerical avoided-crossing gap runs a few percent above the
    # second-order formula at strong drive
    dev = paper_device()
    for amp in (0.4, 0.6, 0.7):
        exact = effective_coupling_exact(dev, amp)
        pert = abs(effective_coupling_perturbative(dev, amp))
        assert 1.0 < exact / pert < 1.15


def test_exact_coupling_zero_drive():
    assert effective_coupling_exact(paper_device(), 0.0) == 0.0


def test_dressed_block_detuning_vanishes_at_resonance_offset():
    dev = paper_device()
    off = f0g1_resonance_offset(dev, 0.7)
    delta, gtilde = dressed_f0g1_block(dev, 0.7, off)
    assert abs(delta) < 1e-3
    assert abs(gtilde) * 1e3 == pytest.approx(5.5348, abs=0.15)


def test_resonance_offset_walks_down_with_drive():
    # relative to the static anchor the transfer resonance is pulled down
    # by the drive; between 0.1 and 0.2 GHz the growth is already faster
    # than the leading amp^2 (the quartic correction is visible)
    dev = paper_device()
    off0 = zero_drive_offset(dev)
    d1 = f0g1_resonance_offset(dev, 0.1) - off0
    d2 = f0g1_resonance_offset(dev, 0.2) - off0
    assert d1 < 0 and d2 < 0
    assert d2 / d1 > 4.0
    assert d2 / d1 == pytest.approx(6.43, abs=0.3)


def test_zero_drive_offset_value():
    # static dispersive offset of the f0-g1 line at zero drive
    dev = paper_device()
    assert zero_drive_offset(dev) * 1e3 == pytest.approx(2.4587, abs=0.01)


# ---------------------------------------------------------------------------
# charge-basis option
# ---------------------------------------------------------------------------

def test_charge_basis_tuned_to_target_frequency():
    ej = solve_ej_for_frequency(0.406, 8.640)
    assert ej == pytest.approx(25.3097, abs=1e-3)
    res = transmon_charge_basis(0.406, ej)
    assert res.omega_ge == pytest.approx(8.640, abs=1e-6)
    assert res.anharmonicity * 1e3 == pytest.approx(-458.16, abs=0.5)
    # within ten percent of the harmonic-correction estimate -421 MHz
    assert abs(res.anharmonicity + 0.421) / 0.421 < 0.10


def test_charge_dispersion_negligible_deep_transmon():
    ej = solve_ej_for_frequency(0.406, 8.640)
    freqs = [transmon_charge_basis(0.406, ej, n_g=ng).omega_ge
             for ng in (0.0, 0.25, 0.5)]
    assert max(freqs) - min(freqs) < 1e-5


def test_charge_basis_warns_shallow_transmon():
    with pytest.warns(UserWarning):
        transmon_charge_basis(0.406, 5.0)   # E_J / E_C about 12


def test_solve_ej_round_trip():
    ej = solve_ej_for_frequency(0.3, 6.5)
    assert transmon_charge_basis(0.3, ej).omega_ge == pytest.approx(
        6.5, abs=1e-8)
