"""Steady-state coupled-mode theory of an add-drop microresonator.

Field normalization: |a|^2 is stored energy in J, |s|^2 is guided power in W.
For a mode at detuning ``delta_omega`` with total decay rate
``kappa_tot = kappa0 + kappa1 + kappa2 + kappa_extra`` (all energy decay
rates in rad/s) the steady state is::

    a   = sqrt(kappa1) s / (kappa_tot/2 - i delta_omega)
    t   = 1 - kappa1 / (kappa_tot/2 + i delta_omega)      (through amplitude)
    T_d = kappa1 kappa2 / (delta_omega^2 + (kappa_tot/2)^2)

``kappa_extra`` is an additional loss channel, here two-photon absorption
by the surrounding vapor.  Power not leaving through either port is
dissipated by ``kappa0 + kappa_extra``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.constants import c as C_M_PER_S
from scipy.optimize import brentq

C_CM_PER_S = C_M_PER_S * 100.0

DEFAULT_WAVELENGTH_M = 1529e-9
DEFAULT_LOADED_Q = 1e5
DEFAULT_MODE_VOLUME_CM3 = 1.9e-11
DEFAULT_EFFECTIVE_INDEX = 1.99
DEFAULT_GROUP_INDEX = 2.0
# kappa2 as a fraction of kappa1; kappa0 supplies the rest of the critical balance
DEFAULT_DROP_FRACTION = 0.8


class ConvergenceError(RuntimeError):
    """Raised when the self-consistent solve fails to converge.

    ``last`` holds the last iterate of intracavity energies (J) and
    ``residual`` the relative residual of the map at that iterate.
    """

    def __init__(self, message: str, last: tuple[float, ...], residual: float):
        super().__init__(message)
        self.last = last
        self.residual = residual


@dataclass(frozen=True)
class ResonatorParams:
    """Single optical mode of the disk, coupled to two waveguides.

    Parameters
    ----------
    resonance_frequency : float
        Cavity resonance f_c [Hz].
    intrinsic_loss_rate : float
        kappa0, energy decay from scattering/absorption [rad/s].
    input_coupling_rate : float
        kappa1, decay into the input (bus) waveguide [rad/s].
    drop_coupling_rate : float
        kappa2, decay into the drop waveguide [rad/s].
    mode_volume : float
        Effective mode volume [cm^3].
    effective_index, group_index : float
        Phase and group index of the mode.
    """

    resonance_frequency: float
    intrinsic_loss_rate: float
    input_coupling_rate: float
    drop_coupling_rate: float
    mode_volume: float = DEFAULT_MODE_VOLUME_CM3
    effective_index: float = DEFAULT_EFFECTIVE_INDEX
    group_index: float = DEFAULT_GROUP_INDEX

    def __post_init__(self) -> None:
        if not self.resonance_frequency > 0:
            raise ValueError(f"resonance_frequency must be > 0, got {self.resonance_frequency}")
        if self.intrinsic_loss_rate < 0 or self.drop_coupling_rate < 0:
            raise ValueError("loss rates must be non-negative")
        if not self.input_coupling_rate > 0:
            raise ValueError(f"input_coupling_rate must be > 0, got {self.input_coupling_rate}")
        if not self.mode_volume > 0:
            raise ValueError(f"mode_volume must be > 0, got {self.mode_volume}")
        if self.effective_index < 1 or self.group_index < 1:
            raise ValueError("effective_index and group_index must be >= 1")
        if not math.isfinite(self.loaded_q):
            raise ValueError("loaded Q is not finite")

    @property
    def kappa_total(self) -> float:
        """Linear (no extra loss) total decay rate [rad/s]."""
        return self.intrinsic_loss_rate + self.input_coupling_rate + self.drop_coupling_rate

    @property
    def loaded_q(self) -> float:
        return 2 * math.pi * self.resonance_frequency / self.kappa_total

    @property
    def intrinsic_q(self) -> float:
        if self.intrinsic_loss_rate == 0:
            return math.inf
        return 2 * math.pi * self.resonance_frequency / self.intrinsic_loss_rate

    @property
    def wavelength(self) -> float:
        """Vacuum wavelength of the resonance [m]."""
        return C_M_PER_S / self.resonance_frequency

    @classmethod
    def critically_coupled(
        cls,
        loaded_q: float = DEFAULT_LOADED_Q,
        wavelength: float = DEFAULT_WAVELENGTH_M,
        drop_fraction: float = DEFAULT_DROP_FRACTION,
        mode_volume: float = DEFAULT_MODE_VOLUME_CM3,
        effective_index: float = DEFAULT_EFFECTIVE_INDEX,
        group_index: float = DEFAULT_GROUP_INDEX,
    ) -> "ResonatorParams":
        """Build a device with kappa1 = kappa0 + kappa2 at the given loaded Q.

        ``drop_fraction`` is kappa2/kappa1; 1 means a lossless symmetric
        add-drop filter.  kappa1 is formed as the floating-point sum
        kappa0 + kappa2 so the critical-coupling residual is exactly zero.
        """
        if not 0 <= drop_fraction <= 1:
            raise ValueError(f"drop_fraction must be in [0, 1], got {drop_fraction}")
        f_c = C_M_PER_S / wavelength
        half = kappa_from_q(loaded_q, f_c) / 2
        kappa2 = drop_fraction * half
        kappa0 = (1.0 - drop_fraction) * half
        return cls(
            resonance_frequency=f_c,
            intrinsic_loss_rate=kappa0,
            input_coupling_rate=kappa0 + kappa2,
            drop_coupling_rate=kappa2,
            mode_volume=mode_volume,
            effective_index=effective_index,
            group_index=group_index,
        )

    def scaled_couplings(self, factor: float) -> "ResonatorParams":
        """Copy with kappa0, kappa1 and kappa2 all multiplied by ``factor``.

        kappa1 is rebuilt from the scaled kappa0 and kappa2 plus the scaled
        critical-coupling residual, so a zero residual stays exactly zero.
        """
        k0 = self.intrinsic_loss_rate * factor
        k2 = self.drop_coupling_rate * factor
        return replace(
            self,
            intrinsic_loss_rate=k0,
            input_coupling_rate=k0 + k2 + critical_coupling_residual(self) * factor,
            drop_coupling_rate=k2,
        )


@dataclass(frozen=True)
class PortResponse:
    """Port transmissions and intracavity state for one drive condition.

    Fields may be numpy arrays when ``steady_state`` is evaluated over a
    detuning grid.  ``dissipated`` is the fraction of input power absorbed
    by intrinsic loss plus the extra loss channel.
    """

    through: float | np.ndarray
    drop: float | np.ndarray
    energy: float | np.ndarray
    intensity: float | np.ndarray
    dissipated: float | np.ndarray


def kappa_from_q(q: float, f_c: float) -> float:
    """Energy decay rate 2*pi*f_c/Q in rad/s."""
    if not (q > 0 and f_c > 0):
        raise ValueError(f"Q and f_c must be positive, got Q={q}, f_c={f_c}")
    return 2 * math.pi * f_c / q


def linewidth_hz(q: float, f_c: float) -> float:
    """Full width at half maximum f_c/Q in Hz."""
    if not (q > 0 and f_c > 0):
        raise ValueError(f"Q and f_c must be positive, got Q={q}, f_c={f_c}")
    return f_c / q


def intensity_from_energy(energy, mode_volume: float, group_index: float):
    """Intracavity intensity in W/cm^2 from stored energy in J.

    Uses I = U (c/n_g) / V, i.e. energy density times group velocity.
    """
    return energy * (C_CM_PER_S / group_index) / mode_volume


def mode_volume_in_cubic_wavelengths(volume_cm3: float, wavelength_m: float, index: float) -> float:
    """Mode volume in units of (lambda/n)^3."""
    if not (volume_cm3 > 0 and wavelength_m > 0 and index > 0):
        raise ValueError("mode volume, wavelength and index must be positive")
    return volume_cm3 / (wavelength_m * 100.0 / index) ** 3


def critical_coupling_residual(params: ResonatorParams) -> float:
    """kappa1 - (kappa0 + kappa2); zero iff the linear through port nulls on resonance."""
    return params.input_coupling_rate - (params.intrinsic_loss_rate + params.drop_coupling_rate)


def steady_state(
    params: ResonatorParams,
    delta_omega=0.0,
    kappa_extra=0.0,
    p_in: float = 1.0,
) -> PortResponse:
    """Evaluate the add-drop steady state.

    ``delta_omega`` (rad/s) and ``kappa_extra`` (rad/s) broadcast against
    each other, so a whole scan can be evaluated in one call.
    """
    kappa_extra = np.asarray(kappa_extra, dtype=float)
    if np.any(kappa_extra < 0):
        raise ValueError("kappa_extra must be non-negative")
    if p_in < 0:
        raise ValueError(f"p_in must be non-negative, got {p_in}")
    k0 = params.intrinsic_loss_rate
    k1 = params.input_coupling_rate
    k2 = params.drop_coupling_rate
    half = (k0 + k1 + k2 + kappa_extra) / 2
    if np.any(half == 0):
        raise ValueError("total decay rate is zero")
    dw = np.asarray(delta_omega, dtype=float)
    denom = dw**2 + half**2
    through = ((half - k1) ** 2 + dw**2) / denom
    drop = k1 * k2 / denom
    dissipated = k1 * (k0 + kappa_extra) / denom
    energy = k1 * p_in / denom
    intensity = intensity_from_energy(energy, params.mode_volume, params.group_index)
    out = [through, drop, energy, intensity, dissipated]
    if all(np.ndim(x) == 0 for x in out):
        out = [float(x) for x in out]
    return PortResponse(*out)


def through_change_on_resonance(params: ResonatorParams, kappa_extra: float) -> float:
    """On-resonance through-port increase caused by ``kappa_extra``."""
    return steady_state(params, 0.0, kappa_extra).through - steady_state(params, 0.0, 0.0).through


LossFunction = Callable[[float], float]


@dataclass(frozen=True)
class SelfConsistentSolution:
    """Fixed point of the coupled two-mode problem.

    ``b`` is None in single-cavity mode.  ``residual`` is the relative
    change of the energies under one more application of the map.
    """

    a: PortResponse
    b: Optional[PortResponse]
    iterations: int
    residual: float

    @property
    def responses(self) -> tuple[PortResponse, ...]:
        return (self.a,) if self.b is None else (self.a, self.b)


def _checked_loss(fn: LossFunction, intensity: float) -> float:
    k = float(fn(intensity))
    if not k >= 0:
        raise ValueError(f"loss function returned {k} at intensity {intensity}; must be >= 0")
    return k


def _rel_change(new: float, old: float) -> float:
    scale = max(abs(new), abs(old))
    return 0.0 if scale == 0 else abs(new - old) / scale


def solve_self_consistent(
    params_a: ResonatorParams,
    params_b: Optional[ResonatorParams],
    drives: tuple[float, ...],
    tpa: tuple[LossFunction, ...],
    pump_intensity: Optional[float] = None,
    damping: float = 0.5,
    rtol: float = 1e-12,
    max_iter: int = 1000,
) -> SelfConsistentSolution:
    """Solve for intracavity energies with mutual intensity-dependent loss.

    Mode a loses energy at ``tpa[0](I_b)``, mode b at ``tpa[1](I_a)``.  Both
    modes are driven on resonance with powers ``drives``.  Without
    ``params_b`` the opposing intensity is the externally fixed
    ``pump_intensity`` and the problem is linear.

    The coupled case uses damped fixed-point iteration on the energies.
    If that does not settle (strong mutual loss can make the undamped map
    expansive), the problem is reduced to the scalar equation
    U_a = F_a(F_b(U_a)), which is bracketed on [0, F_a(0)] because both
    loss functions are nondecreasing.
    """
    if params_b is None:
        if pump_intensity is None:
            raise ValueError("single-cavity mode needs pump_intensity")
        kx = _checked_loss(tpa[0], pump_intensity)
        return SelfConsistentSolution(steady_state(params_a, 0.0, kx, drives[0]), None, 1, 0.0)

    p_a, p_b = drives
    loss_a, loss_b = tpa

    def energy_a(u_b: float) -> float:
        i_b = intensity_from_energy(u_b, params_b.mode_volume, params_b.group_index)
        return steady_state(params_a, 0.0, _checked_loss(loss_a, i_b), p_a).energy

    def energy_b(u_a: float) -> float:
        i_a = intensity_from_energy(u_a, params_a.mode_volume, params_a.group_index)
        return steady_state(params_b, 0.0, _checked_loss(loss_b, i_a), p_b).energy

    def finish(u_a: float, u_b: float, iterations: int) -> SelfConsistentSolution:
        i_a = intensity_from_energy(u_a, params_a.mode_volume, params_a.group_index)
        i_b = intensity_from_energy(u_b, params_b.mode_volume, params_b.group_index)
        ra = steady_state(params_a, 0.0, _checked_loss(loss_a, i_b), p_a)
        rb = steady_state(params_b, 0.0, _checked_loss(loss_b, i_a), p_b)
        res = max(_rel_change(energy_a(rb.energy), ra.energy), _rel_change(energy_b(ra.energy), rb.energy))
        return SelfConsistentSolution(ra, rb, iterations, res)

    u_a, u_b = energy_a(0.0), energy_b(0.0)
    best = math.inf
    residual = math.inf
    for it in range(1, max_iter + 1):
        fa, fb = energy_a(u_b), energy_b(u_a)
        residual = max(_rel_change(fa, u_a), _rel_change(fb, u_b))
        # keep going below rtol while the residual still shrinks, so the
        # returned energies are a fixed point to better than rtol
        if residual <= rtol * 1e-2 or (residual <= rtol and residual >= best):
            return finish(fa, fb, it)
        best = min(best, residual)
        u_a = (1 - damping) * u_a + damping * fa
        u_b = (1 - damping) * u_b + damping * fb

    # bracketed fallback on the scalar reduction
    hi = energy_a(0.0)
    if hi == 0.0:
        return finish(0.0, energy_b(0.0), max_iter)
    try:
        root, info = brentq(
            lambda x: x - energy_a(energy_b(x)), 0.0, hi, xtol=hi * 1e-16, rtol=1e-15,
            maxiter=500, full_output=True,
        )
    except (ValueError, RuntimeError) as exc:
        raise ConvergenceError(f"self-consistent solve failed: {exc}", (u_a, u_b), residual) from exc
    sol = finish(root, energy_b(root), max_iter + info.iterations)
    if not info.converged or sol.residual > rtol:
        raise ConvergenceError(
            f"self-consistent solve did not converge (residual {sol.residual:.3g})",
            (sol.a.energy, sol.b.energy),
            sol.residual,
        )
    return sol
