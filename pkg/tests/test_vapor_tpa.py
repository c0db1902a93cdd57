import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.constants import Boltzmann, c
from scipy.special import voigt_profile

from zenoswitch.analysis_fit import fit_inverse_square
from zenoswitch.cmt_core import through_change_on_resonance
from zenoswitch.vapor_tpa import (
    RB85_MASS_KG,
    CalibrationError,
    TpaOperatingPoint,
    VaporParams,
    calibrate_alpha,
    default_two_photon_fwhm,
    doppler_fwhm,
    doppler_sigma,
    intermediate_lineshape,
    reference_cell_profile,
    tpa_loss_rate,
    transit_width,
    two_photon_resonance_factor,
)

SIGMA = 0.24e9
GAMMA = 6e6


def voigt_oracle(delta, sigma, gamma):
    """<1/((d - x)^2 + (g/2)^2)> over a Gaussian = pi/(g/2) * Voigt(d; sigma, g/2)."""
    return math.pi / (gamma / 2) * voigt_profile(delta, sigma, gamma / 2)


# ---------------------------------------------------------------- widths

def test_doppler_sigma_at_cell_temperature():
    f = 3.843e14
    expected = f * math.sqrt(Boltzmann * 353 / RB85_MASS_KG) / c
    assert doppler_sigma(353, RB85_MASS_KG, f) == pytest.approx(expected, rel=1e-12)
    assert doppler_sigma(353, RB85_MASS_KG, f) == pytest.approx(238e6, rel=0.01)
    assert doppler_fwhm(353, RB85_MASS_KG, f) == pytest.approx(560e6, rel=0.01)


def test_doppler_cold_limit_and_wavelength_ratio():
    f = 3.843e14
    assert doppler_sigma(1e-30, RB85_MASS_KG, f) < 1e-3
    assert doppler_sigma(3.53, RB85_MASS_KG, f) == pytest.approx(0.1 * doppler_sigma(353, RB85_MASS_KG, f), rel=1e-12)
    ratio = doppler_sigma(353, RB85_MASS_KG, c / 780e-9) / doppler_sigma(353, RB85_MASS_KG, c / 1529e-9)
    assert ratio == pytest.approx(1529 / 780, rel=1e-12)
    assert ratio == pytest.approx(1.961, abs=1e-3)


def test_default_two_photon_width():
    assert default_two_photon_fwhm() == pytest.approx(0.63e9, rel=0.01)
    v = VaporParams()
    assert v.two_photon_width_fwhm == default_two_photon_fwhm()
    assert v.transit_broadening == pytest.approx(transit_width(v.temperature, v.atomic_mass), rel=1e-15)
    assert v.effective_two_photon_fwhm == pytest.approx(math.hypot(v.two_photon_width_fwhm, v.transit_broadening))
    assert VaporParams(transit_broadening=0.0).effective_two_photon_fwhm == v.two_photon_width_fwhm


@pytest.mark.parametrize("kwargs", [
    dict(density=1e8), dict(density=1e15), dict(temperature=0), dict(overlap_fraction=1.5),
    dict(overlap_fraction=-0.1), dict(gamma_intermediate=-1), dict(two_photon_width_fwhm=-1),
])
def test_vapor_validation(kwargs):
    with pytest.raises(ValueError):
        VaporParams(**kwargs)


def test_operating_point_validation():
    with pytest.raises(ValueError):
        TpaOperatingPoint(pump_intensity=-1)


# --------------------------------------------------------------- lineshape

def test_unbroadened_limit_is_inverse_square():
    for d in (1e8, 6e9, -3e10):
        assert intermediate_lineshape(d, 0.0, 0.0) == 1 / d**2
    assert intermediate_lineshape(6e9, 0.0, 1e-3) == pytest.approx(1 / 6e9**2, rel=1e-20)


def test_singular_without_broadening():
    with pytest.raises(ValueError):
        intermediate_lineshape(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        intermediate_lineshape(1e9, -1.0, 1.0)


@pytest.mark.parametrize("delta", [0.0, 5e6, 1e8, 3e8, 1e9, 6e9, -2e9, 4e10])
def test_lineshape_matches_voigt(delta):
    assert intermediate_lineshape(delta, SIGMA, GAMMA) == pytest.approx(voigt_oracle(delta, SIGMA, GAMMA), rel=1e-8)


def test_inverse_square_ratio():
    ratio = intermediate_lineshape(6e9, SIGMA, GAMMA) / intermediate_lineshape(12e9, SIGMA, GAMMA)
    assert ratio == pytest.approx(4.0, abs=0.02)


def test_log_log_slope():
    d = np.geomspace(5e9, 50e9, 40)
    slope = np.polyfit(np.log(d), np.log(intermediate_lineshape(d, SIGMA, GAMMA)), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.02)
    d = np.geomspace(10 * SIGMA, 100 * SIGMA, 40)
    slope = np.polyfit(np.log(d), np.log(intermediate_lineshape(d, SIGMA, GAMMA)), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.02)


def test_array_input_matches_scalar():
    d = np.array([[1e9, 2e9], [3e9, -4e9]])
    out = intermediate_lineshape(d, SIGMA, GAMMA)
    assert out.shape == d.shape
    assert out[1, 1] == intermediate_lineshape(-4e9, SIGMA, GAMMA)


def test_gaussian_kernel_normalized():
    val, _ = integrate.quad(lambda x: math.exp(-0.5 * (x / SIGMA) ** 2) / (SIGMA * math.sqrt(2 * math.pi)),
                            -12 * SIGMA, 12 * SIGMA)
    assert val == pytest.approx(1.0, abs=1e-12)
    # far wings: the averaged weight approaches the bare 1/delta^2
    assert intermediate_lineshape(1e12, SIGMA, GAMMA) * 1e24 == pytest.approx(1.0, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(delta=st.floats(1e6, 5e10), sigma=st.floats(1e7, 1e9), gamma=st.floats(1e5, 5e7))
def test_lineshape_even_and_decreasing(delta, sigma, gamma):
    plus = intermediate_lineshape(delta, sigma, gamma)
    assert plus == pytest.approx(intermediate_lineshape(-delta, sigma, gamma), rel=1e-9)
    if delta > 3 * sigma + gamma:
        assert intermediate_lineshape(1.1 * delta, sigma, gamma) < plus


# ------------------------------------------------------- two-photon factor

def test_two_photon_factor():
    assert two_photon_resonance_factor(0.0, 0.63e9) == 1.0
    assert two_photon_resonance_factor(10e9, 0.63e9) < 1e-100
    assert two_photon_resonance_factor(0.315e9, 0.63e9) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(ValueError):
        two_photon_resonance_factor(0.0, 0.0)


# ----------------------------------------------------------------- loss rate

def test_loss_rate_scaling(vapor, op_point):
    base = tpa_loss_rate(vapor, op_point, 1.0)
    assert tpa_loss_rate(vapor, TpaOperatingPoint(6e9, 0.0, 0.0), 1.0) == 0.0
    doubled = VaporParams(density=2 * vapor.density)
    assert tpa_loss_rate(doubled, op_point, 1.0) == 2 * base
    assert tpa_loss_rate(vapor, TpaOperatingPoint(6e9, 0.0, 2 * op_point.pump_intensity), 1.0) == 2 * base
    off = tpa_loss_rate(vapor, TpaOperatingPoint(6e9, 10e9, op_point.pump_intensity), 1.0)
    assert 0 <= off < 1e-50 * base
    with pytest.raises(ValueError):
        tpa_loss_rate(vapor, op_point, -1.0)


def test_loss_rate_formula(vapor, op_point):
    expected = (3.0 * vapor.overlap_fraction * vapor.density * op_point.pump_intensity
                * voigt_oracle(6e9, vapor.sigma_intermediate, vapor.gamma_intermediate))
    assert tpa_loss_rate(vapor, op_point, 3.0) == pytest.approx(expected, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(n=st.floats(1e9, 5e13), i=st.floats(0, 1e4), d=st.floats(1e8, 2e10), d2=st.floats(-2e10, 2e10))
def test_loss_rate_nonnegative_and_linear(n, i, d, d2):
    v = VaporParams(density=n)
    op = TpaOperatingPoint(d, d2, i)
    k = tpa_loss_rate(v, op, 1e15)
    assert k >= 0
    assert tpa_loss_rate(VaporParams(density=n * 2), op, 1e15) == pytest.approx(2 * k, rel=1e-14)


# --------------------------------------------------------------- calibration

def test_calibrate_zero_target(device, vapor):
    assert calibrate_alpha(0.0, device, vapor) == 0.0


@pytest.mark.parametrize("target", [0.001, 0.02, 0.1, 0.5])
def test_calibration_round_trip(device, vapor, op_point, target):
    a = calibrate_alpha(target, device, vapor, op_point)
    change = through_change_on_resonance(device, tpa_loss_rate(vapor, op_point, a))
    assert change == pytest.approx(target, abs=1e-9)


def test_calibration_ratio_dense_scan(device, vapor, op_point, alpha):
    # at critical coupling T_t(0) = (x/(1+x))^2 with x = kappa_tpa/kappa_tot
    ratio = tpa_loss_rate(vapor, op_point, alpha) / device.kappa_total
    closed = math.sqrt(0.02) / (1 - math.sqrt(0.02))
    assert ratio == pytest.approx(closed, rel=1e-9)
    x = np.linspace(0, 1, 2001)
    change = np.array([through_change_on_resonance(device, v * device.kappa_total) for v in x])
    k = np.searchsorted(change, 0.02)
    assert x[k - 1] <= ratio <= x[k]


def test_calibration_unreachable(device, vapor):
    with pytest.raises(CalibrationError):
        calibrate_alpha(0.9, device, vapor)
    with pytest.raises(CalibrationError):
        calibrate_alpha(-0.01, device, vapor)
    with pytest.raises(CalibrationError):
        calibrate_alpha(0.02, device, vapor, TpaOperatingPoint(pump_intensity=0.0))


# ------------------------------------------------------ reference-cell profile

def test_reference_profile_ratio(vapor):
    y = reference_cell_profile([6e9, 12e9], vapor)
    assert y[0] / y[1] == pytest.approx(4.0, abs=0.02)


def test_reference_profile_even_and_normalized(vapor):
    d = np.linspace(-3e9, 3e9, 61)
    y = reference_cell_profile(d, vapor, normalize=True)
    assert np.max(y) == 1.0
    np.testing.assert_allclose(y, y[::-1], rtol=1e-9)
    assert np.argmax(y) == 30


def test_reference_profile_fit_round_trip(vapor):
    # generating alpha of the bare 1/delta^2 law is alpha_cal * eta * N * I
    x = np.linspace(-2.5e9, 2.5e9, 501)
    y = reference_cell_profile(x + 6e9, vapor, alpha_cal=1.0)
    fit = fit_inverse_square(x, y)
    alpha_true = vapor.overlap_fraction * vapor.density * 470.0
    assert fit["alpha"] == pytest.approx(alpha_true, rel=0.01)
    assert fit["f0"] == pytest.approx(6e9, rel=0.01)
