"""Two-photon absorption loss from hot Rb vapor on the 5S1/2 -> 5P3/2 -> 4D3/2 ladder.

The intracavity 1529 nm mode loses energy at a rate

    kappa_tpa = alpha_cal * eta * N * I_780 * R(delta2) * L(delta_Rb)

where ``L`` is the Doppler-averaged intermediate-state weight (approaching
1/delta_Rb^2 far from the D2 line), ``R`` a unit-peak Gaussian in the
two-photon detuning and ``alpha_cal`` an empirical constant fixed by
:func:`calibrate_alpha`.  Hyperfine structure and both isotopes are lumped
into one effective line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.constants import c as C_M_PER_S
from scipy.constants import k as K_B
from scipy.constants import atomic_mass
from scipy.optimize import brentq

from .cmt_core import ResonatorParams, through_change_on_resonance

RB85_MASS_KG = 84.911789738 * atomic_mass
D2_WAVELENGTH_M = 780.241e-9
UPPER_STEP_WAVELENGTH_M = 1529.26e-9
D2_NATURAL_LINEWIDTH_HZ = 6.0666e6
EVANESCENT_DECAY_LENGTH_M = 300e-9
FWHM_PER_SIGMA = 2 * math.sqrt(2 * math.log(2))

DEFAULT_TEMPERATURE_K = 353.15
DEFAULT_DENSITY_CM3 = 5e11
DEFAULT_OVERLAP = 0.1
DEFAULT_INTERMEDIATE_DETUNING_HZ = 6e9
DEFAULT_PUMP_INTENSITY = 470.0
DEFAULT_THROUGH_CHANGE = 0.02

DENSITY_RANGE_CM3 = (1e9, 1e14)


class QuadratureError(RuntimeError):
    pass


class CalibrationError(ValueError):
    pass


def doppler_sigma(temperature: float, mass: float, frequency: float) -> float:
    """One-dimensional Doppler standard deviation f*sqrt(kT/m)/c in Hz."""
    if temperature < 0 or mass <= 0 or frequency <= 0:
        raise ValueError("temperature must be >= 0, mass and frequency > 0")
    return frequency * math.sqrt(K_B * temperature / mass) / C_M_PER_S


def doppler_fwhm(temperature: float, mass: float, frequency: float) -> float:
    return FWHM_PER_SIGMA * doppler_sigma(temperature, mass, frequency)


def most_probable_speed(temperature: float, mass: float) -> float:
    return math.sqrt(2 * K_B * temperature / mass)


def transit_width(temperature: float, mass: float, decay_length: float = EVANESCENT_DECAY_LENGTH_M) -> float:
    """Time-of-flight width v_p / (2 pi d) for atoms crossing the evanescent field [Hz]."""
    return most_probable_speed(temperature, mass) / (2 * math.pi * decay_length)


def default_two_photon_fwhm(temperature: float = DEFAULT_TEMPERATURE_K, mass: float = RB85_MASS_KG) -> float:
    """Quadrature sum of the Doppler FWHMs of both ladder steps.

    Corresponds to a free-space 780 nm beam orthogonal to the in-plane
    circulating 1529 nm mode, so the two Doppler shifts are uncorrelated.
    """
    f1 = C_M_PER_S / D2_WAVELENGTH_M
    f2 = C_M_PER_S / UPPER_STEP_WAVELENGTH_M
    return math.hypot(doppler_fwhm(temperature, mass, f1), doppler_fwhm(temperature, mass, f2))


@dataclass(frozen=True)
class VaporParams:
    """Rb vapor surrounding the disk.

    ``two_photon_width_fwhm`` and ``transit_broadening`` default to values
    derived from the temperature (see :func:`default_two_photon_fwhm` and
    :func:`transit_width`).  Set ``transit_broadening=0`` to drop it.
    """

    density: float = DEFAULT_DENSITY_CM3  # cm^-3
    temperature: float = DEFAULT_TEMPERATURE_K  # K
    atomic_mass: float = RB85_MASS_KG  # kg
    lambda_1: float = D2_WAVELENGTH_M  # m
    lambda_2: float = UPPER_STEP_WAVELENGTH_M  # m
    gamma_intermediate: float = D2_NATURAL_LINEWIDTH_HZ  # Hz
    two_photon_width_fwhm: Optional[float] = None  # Hz
    transit_broadening: Optional[float] = None  # Hz
    overlap_fraction: float = DEFAULT_OVERLAP

    def __post_init__(self) -> None:
        lo, hi = DENSITY_RANGE_CM3
        if not lo <= self.density <= hi:
            raise ValueError(f"density {self.density:g} cm^-3 outside validated range [{lo:g}, {hi:g}]")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not self.atomic_mass > 0 or not self.lambda_1 > 0 or not self.lambda_2 > 0:
            raise ValueError("mass and wavelengths must be positive")
        if not 0 <= self.overlap_fraction <= 1:
            raise ValueError(f"overlap_fraction must be in [0, 1], got {self.overlap_fraction}")
        if self.two_photon_width_fwhm is None:
            object.__setattr__(self, "two_photon_width_fwhm", default_two_photon_fwhm(self.temperature, self.atomic_mass))
        if self.transit_broadening is None:
            object.__setattr__(self, "transit_broadening", transit_width(self.temperature, self.atomic_mass))
        if self.gamma_intermediate < 0 or self.two_photon_width_fwhm < 0 or self.transit_broadening < 0:
            raise ValueError("widths must be non-negative")

    @property
    def sigma_intermediate(self) -> float:
        """Doppler sigma of the first (780 nm) step [Hz]."""
        return doppler_sigma(self.temperature, self.atomic_mass, C_M_PER_S / self.lambda_1)

    @property
    def effective_two_photon_fwhm(self) -> float:
        """Two-photon width with transit broadening added in quadrature."""
        return math.hypot(self.two_photon_width_fwhm, self.transit_broadening)


@dataclass(frozen=True)
class TpaOperatingPoint:
    intermediate_detuning: float = DEFAULT_INTERMEDIATE_DETUNING_HZ  # Hz
    two_photon_detuning: float = 0.0  # Hz
    pump_intensity: float = DEFAULT_PUMP_INTENSITY  # W/cm^2

    def __post_init__(self) -> None:
        if self.pump_intensity < 0:
            raise ValueError(f"pump_intensity must be >= 0, got {self.pump_intensity}")


@lru_cache(maxsize=65536)
def _lineshape_scalar(delta: float, sigma: float, gamma: float) -> float:
    hw = gamma / 2
    if sigma == 0:
        return 1.0 / (delta * delta + hw * hw)

    def integrand(x: float) -> float:
        return math.exp(-0.5 * (x / sigma) ** 2) / ((delta - x) ** 2 + hw * hw)

    lim = 12.0 * sigma
    points = [0.0]
    if -lim < delta < lim:
        points += [delta - 5 * hw, delta, delta + 5 * hw]
    points = sorted(p for p in set(points) if -lim < p < lim)
    val, err, info = _quad(integrand, -lim, lim, points)
    norm = sigma * math.sqrt(2 * math.pi)
    return val / norm


def _quad(fn, a, b, points):
    with np.errstate(all="ignore"):
        out = integrate.quad(fn, a, b, points=points, epsabs=0.0, epsrel=1e-10, limit=500, full_output=1)
    val, err, info = out[0], out[1], out[2]
    if len(out) > 3 or not math.isfinite(val) or err > 1e-8 * abs(val):
        raise QuadratureError(f"lineshape quadrature failed: value={val}, error estimate={err}")
    return val, err, info


def intermediate_lineshape(delta, sigma_doppler: float, gamma1: float):
    """Doppler-averaged weight <1 / ((delta - f v/c)^2 + (gamma1/2)^2)> in 1/Hz^2.

    The average runs over a Gaussian velocity distribution whose frequency
    standard deviation is ``sigma_doppler``; it is computed by adaptive
    quadrature.  For |delta| much larger than both widths the result
    tends to 1/delta^2.  ``delta`` may be a scalar or an array.
    """
    if sigma_doppler < 0 or gamma1 < 0:
        raise ValueError("widths must be non-negative")
    if sigma_doppler == 0 and gamma1 == 0 and np.any(np.asarray(delta) == 0):
        raise ValueError("lineshape is singular at delta=0 without broadening")
    if np.ndim(delta) == 0:
        return _lineshape_scalar(float(delta), float(sigma_doppler), float(gamma1))
    d = np.asarray(delta, dtype=float)
    flat = [_lineshape_scalar(float(x), float(sigma_doppler), float(gamma1)) for x in d.ravel()]
    return np.array(flat).reshape(d.shape)


def two_photon_resonance_factor(delta2, fwhm: float):
    """Unit-peak Gaussian in the two-photon detuning."""
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm}")
    return np.exp(-4 * math.log(2) * (np.asarray(delta2, dtype=float) / fwhm) ** 2)


def tpa_loss_rate(vapor: VaporParams, op_point: TpaOperatingPoint, alpha_cal: float):
    """Extra energy decay rate of the 1529 nm mode [rad/s].

    Linear in density and pump intensity.  ``op_point`` fields may hold
    arrays for a whole scan.
    """
    if alpha_cal < 0:
        raise ValueError(f"alpha_cal must be >= 0, got {alpha_cal}")
    shape = intermediate_lineshape(op_point.intermediate_detuning, vapor.sigma_intermediate, vapor.gamma_intermediate)
    res = two_photon_resonance_factor(op_point.two_photon_detuning, vapor.effective_two_photon_fwhm)
    out = alpha_cal * vapor.overlap_fraction * vapor.density * op_point.pump_intensity * res * shape
    return float(out) if np.ndim(out) == 0 else out


def loss_per_alpha(vapor: VaporParams, op_point: TpaOperatingPoint) -> float:
    """kappa_tpa for alpha_cal = 1 at a scalar operating point."""
    return float(tpa_loss_rate(vapor, op_point, 1.0))


def calibrate_alpha(
    target_through_change: float,
    device: ResonatorParams,
    vapor: VaporParams,
    op_point: TpaOperatingPoint = TpaOperatingPoint(),
    max_ratio: float = 10.0,
) -> float:
    """Find alpha_cal giving the requested on-resonance through-port increase.

    The search is over kappa_tpa in [0, max_ratio * kappa_tot] and stops
    when the through-port change matches to 1e-10 or better.
    """
    if target_through_change == 0:
        return 0.0
    per_alpha = loss_per_alpha(vapor, op_point)
    if per_alpha <= 0:
        raise CalibrationError("operating point has no two-photon absorption to calibrate against")
    ktot = device.kappa_total

    def excess(ratio: float) -> float:
        return through_change_on_resonance(device, ratio * ktot) - target_through_change

    lo_val, hi_val = excess(0.0), excess(max_ratio)
    if lo_val > 0 or hi_val < 0:
        reach = hi_val + target_through_change
        raise CalibrationError(
            f"target through change {target_through_change:g} unreachable: "
            f"kappa_tpa <= {max_ratio:g} kappa_tot spans [0, {reach:.6g}]"
        )
    ratio = brentq(excess, 0.0, max_ratio, xtol=1e-15, rtol=1e-15, maxiter=500)
    if abs(excess(ratio)) > 1e-10:
        raise CalibrationError(f"calibration residual {excess(ratio):.3g} above 1e-10")
    return ratio * ktot / per_alpha


def reference_cell_profile(
    delta_rb,
    vapor: VaporParams,
    alpha_cal: float = 1.0,
    pump_intensity: float = DEFAULT_PUMP_INTENSITY,
    normalize: bool = False,
) -> np.ndarray:
    """TPA signal versus intermediate detuning with the two-photon condition held.

    Proportional to :func:`tpa_loss_rate` on the grid; with ``normalize``
    the largest sample is scaled to 1.
    """
    op = TpaOperatingPoint(np.asarray(delta_rb, dtype=float), 0.0, pump_intensity)
    y = np.asarray(tpa_loss_rate(vapor, op, alpha_cal), dtype=float)
    if normalize:
        y = y / np.max(y)
    return y
