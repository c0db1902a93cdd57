import pytest

from zenoswitch.cmt_core import ResonatorParams
from zenoswitch.vapor_tpa import TpaOperatingPoint, VaporParams, calibrate_alpha


@pytest.fixture(scope="session")
def device():
    return ResonatorParams.critically_coupled()


@pytest.fixture(scope="session")
def vapor():
    return VaporParams()


@pytest.fixture(scope="session")
def op_point():
    return TpaOperatingPoint()


@pytest.fixture(scope="session")
def alpha(device, vapor, op_point):
    return calibrate_alpha(0.02, device, vapor, op_point)
