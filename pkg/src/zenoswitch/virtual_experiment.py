"""Synthetic scan sessions.

Each trial scans the 780 nm and 1529 nm lasers by equal and opposite
amounts, so the two-photon condition holds while the intermediate-state
detuning delta_Rb sweeps across the cavity resonance.  A control scan with
the 780 nm laser pushed off two-photon resonance follows every TPA scan.

Random numbers: trial ``i`` draws from ``default_rng(rng_seed + i)`` in
the fixed order [drift, tpa through, tpa drop, control through, control
drop], so a trace depends only on (config, trial id, condition) and not on
how trials are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cmt_core import ResonatorParams, steady_state
from .vapor_tpa import DEFAULT_PUMP_INTENSITY, TpaOperatingPoint, VaporParams, tpa_loss_rate

TPA = "tpa"
CONTROL = "control"
DIFFERENCE = "difference"
CONDITIONS = (TPA, CONTROL)

NOISE_CLIP = 5.0


@dataclass(frozen=True)
class ScanConfig:
    center: float = 6e9  # Hz, delta_Rb at the cavity resonance (f0)
    span: float = 5e9  # Hz
    samples: int = 501
    trials: int = 100
    drift_sigma: float = 100e6  # Hz, per trial pair
    noise_sigma: float = 0.005  # fraction of full scale
    control_offset: float = 10e9  # Hz
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.span > 0:
            raise ValueError(f"span must be > 0, got {self.span}")
        if self.samples < 3:
            raise ValueError(f"samples must be >= 3, got {self.samples}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.noise_sigma < 0 or self.drift_sigma < 0:
            raise ValueError("noise_sigma and drift_sigma must be >= 0")

    @property
    def axis(self) -> np.ndarray:
        """Scan grid of delta_Rb [Hz]."""
        return np.linspace(self.center - self.span / 2, self.center + self.span / 2, self.samples)


@dataclass(frozen=True, eq=False)
class ScanTrace:
    """One sampled scan.

    The detuning axis is stored as ``delta - offset`` so that re-zeroing
    by ``a`` and then by ``-a`` restores the original axis bit for bit.
    ``trial_id`` is -1 for averaged or derived traces.
    """

    delta: np.ndarray
    through: np.ndarray
    drop: np.ndarray
    condition: str
    trial_id: int = -1
    true_center: float = math.nan
    offset: float = 0.0

    def __post_init__(self) -> None:
        n = len(self.delta)
        if len(self.through) != n or len(self.drop) != n:
            raise ValueError("axis and signal sequences must have equal length")

    @property
    def axis(self) -> np.ndarray:
        return self.delta - self.offset

    def __len__(self) -> int:
        return len(self.delta)


def _trial_draws(config: ScanConfig, trial_id: int) -> tuple[float, np.ndarray]:
    rng = np.random.default_rng(config.rng_seed + trial_id)
    drift = config.drift_sigma * rng.standard_normal()
    noise = rng.standard_normal((4, config.samples))
    # truncation keeps every sample inside [-5 sigma, 1 + 5 sigma]
    np.clip(noise, -NOISE_CLIP, NOISE_CLIP, out=noise)
    return drift, config.noise_sigma * noise


def expected_trace(
    config: ScanConfig,
    device: ResonatorParams,
    vapor: Optional[VaporParams],
    condition: str,
    alpha_cal: float = 0.0,
    pump_intensity: float = DEFAULT_PUMP_INTENSITY,
    drift: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless through and drop transmissions on the scan grid."""
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    axis = config.axis
    if vapor is None:
        kx = np.zeros_like(axis)
    else:
        # the control shifts the 780 nm laser, moving both detunings
        shift = 0.0 if condition == TPA else config.control_offset
        op = TpaOperatingPoint(axis + shift, shift, pump_intensity)
        kx = tpa_loss_rate(vapor, op, alpha_cal)
    # the 1529 nm laser moves opposite to the 780 nm laser
    delta_omega = -2 * math.pi * (axis - (config.center + drift))
    resp = steady_state(device, delta_omega, kx)
    return resp.through, resp.drop


def run_trial(
    config: ScanConfig,
    device: ResonatorParams,
    vapor: Optional[VaporParams],
    condition: str,
    alpha_cal: float = 0.0,
    trial_id: int = 0,
    pump_intensity: float = DEFAULT_PUMP_INTENSITY,
    input_transmission: float = 1.0,
) -> ScanTrace:
    """Simulate one scan.

    ``vapor=None`` means no atoms (kappa_tpa = 0).  ``input_transmission``
    scales the detected signals before noise, modelling loss ahead of the
    resonator.
    """
    drift, noise = _trial_draws(config, trial_id)
    through, drop = expected_trace(config, device, vapor, condition, alpha_cal, pump_intensity, drift)
    rows = (0, 1) if condition == TPA else (2, 3)
    return ScanTrace(
        delta=config.axis,
        through=input_transmission * through + noise[rows[0]],
        drop=input_transmission * drop + noise[rows[1]],
        condition=condition,
        trial_id=trial_id,
        true_center=config.center + drift,
    )


def run_paired_session(
    config: ScanConfig,
    device: ResonatorParams,
    vapor: Optional[VaporParams],
    alpha_cal: float = 0.0,
    pump_intensity: float = DEFAULT_PUMP_INTENSITY,
) -> list[ScanTrace]:
    """2 * trials traces alternating tpa, control; each pair shares a drift draw."""
    out = []
    for i in range(config.trials):
        for cond in CONDITIONS:
            out.append(run_trial(config, device, vapor, cond, alpha_cal, i, pump_intensity))
    return out


def run_no_vapor_control(config: ScanConfig, device: ResonatorParams) -> list[ScanTrace]:
    """Same protocol with no atoms present."""
    return run_paired_session(config, device, None)


def run_waveguide_beam_control(
    config: ScanConfig,
    device: ResonatorParams,
    pre_cavity_absorption: float = 0.05,
) -> list[ScanTrace]:
    """780 nm beam parked on the bus waveguide instead of the disk.

    No TPA reaches the cavity mode, but during the resonant scans a
    fraction ``pre_cavity_absorption`` of the 1529 nm input is absorbed
    before the resonator.  Normalizing each trace to its off-resonance
    baseline removes the effect.
    """
    if not 0 <= pre_cavity_absorption < 1:
        raise ValueError("pre_cavity_absorption must be in [0, 1)")
    out = []
    for i in range(config.trials):
        out.append(run_trial(config, device, None, TPA, trial_id=i, input_transmission=1 - pre_cavity_absorption))
        out.append(run_trial(config, device, None, CONTROL, trial_id=i))
    return out


def with_seed(config: ScanConfig, seed: int) -> ScanConfig:
    return replace(config, rng_seed=seed)
