"""Simulation and analysis of a microdisk switched by two-photon absorption in Rb vapor."""

from .cmt_core import ConvergenceError, PortResponse, ResonatorParams, solve_self_consistent, steady_state
from .config import ConfigError, SessionConfig
from .vapor_tpa import CalibrationError, QuadratureError, TpaOperatingPoint, VaporParams, calibrate_alpha, tpa_loss_rate
from .virtual_experiment import ScanConfig, ScanTrace, run_paired_session

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ConfigError",
    "ConvergenceError",
    "PortResponse",
    "QuadratureError",
    "ResonatorParams",
    "ScanConfig",
    "ScanTrace",
    "SessionConfig",
    "TpaOperatingPoint",
    "VaporParams",
    "calibrate_alpha",
    "run_paired_session",
    "solve_self_consistent",
    "steady_state",
    "tpa_loss_rate",
]
