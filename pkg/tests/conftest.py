"""Shared fixtures.

Everything expensive (emission runs, the model Stark map) is session-scoped
so the dynamics, calibration and acceptance tests share one copy. All
records are integrated at dt = 0.01 ns, the routine step used throughout.
"""

import numpy as np
import pytest

from photonshaper.calibration import reset_protocol, stark_map_from_model
from photonshaper.device import paper_device
from photonshaper.dynamics import emit_photon
from photonshaper.pulses import compensate_phase, synthesize_sin2


@pytest.fixture(scope="session")
def device():
    return paper_device()


@pytest.fixture(scope="session")
def stark(device):
    return stark_map_from_model(device)


@pytest.fixture(scope="session")
def shaped(stark):
    """Factory for Stark-compensated sin^2 pulses."""
    def make(amp, duration):
        return compensate_phase(synthesize_sin2(amp, duration), stark)
    return make


# ---------------------------------------------------------------------------
# emission records reused across modules
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def env_200_07(shaped):
    return shaped(0.7, 200.0)


@pytest.fixture(scope="session")
def rec_sup_200_07(device, env_200_07):
    return emit_photon(device, env_200_07, "superposition", dt=0.01)


@pytest.fixture(scope="session")
def rec_sup_200_07_fine(device, env_200_07):
    # same pulse at half the step, paired with rec_sup_200_07 for
    # step-halving stability checks
    return emit_photon(device, env_200_07, "superposition", dt=0.005)


@pytest.fixture(scope="session")
def rec_f0_500_075(device, shaped):
    return emit_photon(device, shaped(0.75, 500.0), "f0", dt=0.01)


@pytest.fixture(scope="session")
def rec_sup_500_075(device, shaped):
    return emit_photon(device, shaped(0.75, 500.0), "superposition",
                       dt=0.01)


@pytest.fixture(scope="session")
def rec_sup_500_06(device, shaped):
    return emit_photon(device, shaped(0.6, 500.0), "superposition",
                       dt=0.01)


@pytest.fixture(scope="session")
def reset_default(device, stark):
    return reset_protocol(device, stark=stark)
