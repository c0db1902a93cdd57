"""Design studies: contrast versus intrinsic Q, power bookkeeping and the
dual-resonant low-power projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .cmt_core import (
    ResonatorParams,
    SelfConsistentSolution,
    critical_coupling_residual,
    kappa_from_q,
    solve_self_consistent,
    steady_state,
    through_change_on_resonance,
)
from .vapor_tpa import D2_WAVELENGTH_M, TpaOperatingPoint, VaporParams, loss_per_alpha, tpa_loss_rate

FREE_SPACE_PUMP_POWER_W = 15e-3
DEFAULT_POWER_CAP_W = 1e-3

SWEEPABLE = ("intrinsic_q", "pump_intensity", "density")


class UnreachableTarget(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    """One-dimensional parameter study.

    ``parameter`` is one of ``intrinsic_q``, ``pump_intensity`` (W/cm^2)
    or ``density`` (cm^-3); the metric is always the on-resonance
    through-port change.
    """

    parameter: str
    values: tuple[float, ...]
    metric: str = "through_change"

    def __post_init__(self) -> None:
        if self.parameter not in SWEEPABLE:
            raise ValueError(f"parameter must be one of {SWEEPABLE}, got {self.parameter!r}")
        if self.metric != "through_change":
            raise ValueError(f"unsupported metric {self.metric!r}")
        v = np.asarray(self.values, dtype=float)
        if v.size < 1 or not np.all(np.isfinite(v)):
            raise ValueError("sweep values must be finite and non-empty")
        d = np.diff(v)
        if v.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep grid must be strictly monotone")


def sweep_contrast_vs_q(
    q0_grid: Sequence[float],
    device: ResonatorParams,
    vapor: VaporParams,
    op_point: TpaOperatingPoint,
    alpha_cal: float,
) -> dict[str, np.ndarray]:
    """Through-port change at fixed TPA loss as the intrinsic Q is raised.

    All three decay rates are scaled together by kappa0_new/kappa0_base,
    which keeps the coupling regime (and a zero critical-coupling
    residual) while the loaded Q follows the intrinsic Q.
    """
    if device.intrinsic_loss_rate <= 0:
        raise ValueError("base device needs a finite intrinsic Q")
    kx = float(tpa_loss_rate(vapor, op_point, alpha_cal))
    q0 = np.asarray(q0_grid, dtype=float)
    loaded = np.empty_like(q0)
    change = np.empty_like(q0)
    residual = np.empty_like(q0)
    for i, q in enumerate(q0):
        factor = kappa_from_q(q, device.resonance_frequency) / device.intrinsic_loss_rate
        dev = device.scaled_couplings(factor)
        loaded[i] = dev.loaded_q
        change[i] = through_change_on_resonance(dev, kx)
        residual[i] = critical_coupling_residual(dev)
    return {"intrinsic_q": q0, "loaded_q": loaded, "through_change": change, "critical_residual": residual}


def run_sweep(
    spec: SweepSpec,
    device: ResonatorParams,
    vapor: VaporParams,
    op_point: TpaOperatingPoint,
    alpha_cal: float,
) -> dict[str, np.ndarray]:
    if spec.parameter == "intrinsic_q":
        return sweep_contrast_vs_q(spec.values, device, vapor, op_point, alpha_cal)
    values = np.asarray(spec.values, dtype=float)
    out = np.empty_like(values)
    for i, v in enumerate(values):
        if spec.parameter == "pump_intensity":
            kx = tpa_loss_rate(vapor, TpaOperatingPoint(op_point.intermediate_detuning, op_point.two_photon_detuning, v), alpha_cal)
        else:
            kx = tpa_loss_rate(replace(vapor, density=v), op_point, alpha_cal)
        out[i] = through_change_on_resonance(device, float(kx))
    return {spec.parameter: values, "through_change": out}


def power_for_intensity(target_intensity: float, p_ref: float, i_ref: float) -> float:
    """Input power giving ``target_intensity`` in the linear regime, P = P_ref I/I_ref."""
    if not i_ref > 0:
        raise ValueError("reference intensity must be positive")
    return p_ref * target_intensity / i_ref


def free_space_beam_geometry(power: float, intensity: float) -> tuple[float, float]:
    """Beam area (cm^2) and equivalent radius sqrt(area/pi) (cm) for a flat-top beam."""
    if power < 0 or not intensity > 0:
        raise ValueError("power must be >= 0 and intensity > 0")
    area = power / intensity
    return area, math.sqrt(area / math.pi)


def companion_mode(device: ResonatorParams, wavelength: float = D2_WAVELENGTH_M) -> ResonatorParams:
    """780 nm mode of the same disk, reusing loaded Q, coupling split and mode volume."""
    drop_fraction = device.drop_coupling_rate / device.input_coupling_rate
    return ResonatorParams.critically_coupled(
        loaded_q=device.loaded_q,
        wavelength=wavelength,
        drop_fraction=drop_fraction,
        mode_volume=device.mode_volume,
        effective_index=device.effective_index,
        group_index=device.group_index,
    )


def dual_resonant_loss_functions(
    mode_1529: ResonatorParams,
    mode_780: ResonatorParams,
    vapor: VaporParams,
    op_point: TpaOperatingPoint,
    alpha_cal: float,
):
    """Loss rates of each mode as functions of the other mode's intensity.

    Every TPA event removes one photon from each mode, so the photon loss
    rates balance: kappa_780 n_780 = kappa_1529 n_1529.  With intensities
    proportional to photon number times photon energy this gives
    kappa_780(I_1529) = (f_780 / f_1529) * kappa_1529 evaluated at I_1529.
    """
    per_intensity = alpha_cal * loss_per_alpha(vapor, TpaOperatingPoint(
        op_point.intermediate_detuning, op_point.two_photon_detuning, 1.0))
    ratio = mode_780.resonance_frequency / mode_1529.resonance_frequency
    return (lambda i_780: per_intensity * i_780), (lambda i_1529: ratio * per_intensity * i_1529)


@dataclass(frozen=True)
class DualResonantEstimate:
    power_780: float
    power_1529: float
    through_change: float
    target: float
    solution: SelfConsistentSolution = field(repr=False)


def dual_resonant_contrast(
    power: float,
    mode_1529: ResonatorParams,
    mode_780: ResonatorParams,
    loss_fns,
    power_ratio: float = 1.0,
) -> tuple[float, SelfConsistentSolution]:
    """On-resonance through change of the 1529 nm mode with both modes driven.

    ``power`` drives the 1529 nm mode; the 780 nm mode gets
    ``power_ratio * power``.
    """
    sol = solve_self_consistent(mode_1529, mode_780, (power, power_ratio * power), loss_fns)
    linear = steady_state(mode_1529, 0.0, 0.0).through
    return sol.a.through - linear, sol


def dual_resonant_power_estimate(
    mode_1529: ResonatorParams,
    vapor: VaporParams,
    alpha_cal: float,
    op_point: TpaOperatingPoint = TpaOperatingPoint(),
    mode_780: Optional[ResonatorParams] = None,
    target_contrast: Optional[float] = None,
    power_cap: float = DEFAULT_POWER_CAP_W,
) -> DualResonantEstimate:
    """Equal per-beam input power at which both-beams-resonant TPA matches a target contrast.

    The target defaults to the through-port change reached with the
    free-space pump at ``op_point.pump_intensity``.  The lowest power
    reaching the target is returned; contrast is not monotone at high
    power because the 1529 nm field in turn suppresses the 780 nm buildup.
    """
    if mode_780 is None:
        mode_780 = companion_mode(mode_1529)
    if target_contrast is None:
        target_contrast = through_change_on_resonance(mode_1529, float(tpa_loss_rate(vapor, op_point, alpha_cal)))
    if not target_contrast > 0:
        raise UnreachableTarget("target contrast must be positive")
    fns = dual_resonant_loss_functions(mode_1529, mode_780, vapor, op_point, alpha_cal)

    def excess(p: float) -> float:
        return dual_resonant_contrast(p, mode_1529, mode_780, fns)[0] - target_contrast

    # walk up in power by factors of 2 until the target is bracketed
    lo = 1e-15
    if excess(lo) >= 0:
        raise UnreachableTarget("target reached below 1 fW; check calibration")
    hi = lo
    while True:
        hi = min(hi * 2, power_cap)
        if excess(hi) >= 0:
            break
        if hi >= power_cap:
            raise UnreachableTarget(f"target contrast {target_contrast:g} not reached below {power_cap:g} W")
        lo = hi
    p = brentq(excess, lo, hi, xtol=1e-30, rtol=1e-13, maxiter=500)
    change, sol = dual_resonant_contrast(p, mode_1529, mode_780, fns)
    return DualResonantEstimate(p, p, change, target_contrast, sol)
