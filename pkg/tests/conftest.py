import numpy as np
import pytest

from transmon_dmrg import chips, oracle


@pytest.fixture(scope="session")
def chip2x2():
    """Calibrated 2x2 qubit + 4 coupler fixture (8 modes, dim 20736)."""
    return chips.chip_2x2()


@pytest.fixture(scope="session")
def chip2x2_spectrum(chip2x2):
    """Low-lying residual-certified spectrum of the 2x2 fixture."""
    return oracle.low_spectrum(chip2x2, k=24)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
