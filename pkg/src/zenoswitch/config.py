"""Session configuration stored as TOML with units spelled out in key names."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .cmt_core import ResonatorParams
from .vapor_tpa import DEFAULT_THROUGH_CHANGE, TpaOperatingPoint, VaporParams
from .traces_io import atomic_write_text
from .virtual_experiment import ScanConfig

DEFAULT_OUTPUT_DIR = "zeno_out"

# (dataclass field, key in file)
DEVICE_KEYS = (
    ("resonance_frequency", "resonance_frequency_hz"),
    ("intrinsic_loss_rate", "intrinsic_loss_rate_rad_per_s"),
    ("input_coupling_rate", "input_coupling_rate_rad_per_s"),
    ("drop_coupling_rate", "drop_coupling_rate_rad_per_s"),
    ("mode_volume", "mode_volume_cm3"),
    ("effective_index", "effective_index"),
    ("group_index", "group_index"),
)
# shorthand accepted on load: a critically coupled device from Q and wavelength
DEVICE_SHORTHAND_KEYS = (
    ("loaded_q", "loaded_q"),
    ("wavelength", "wavelength_m"),
    ("drop_fraction", "drop_fraction"),
    ("mode_volume", "mode_volume_cm3"),
    ("effective_index", "effective_index"),
    ("group_index", "group_index"),
)
VAPOR_KEYS = (
    ("density", "density_per_cm3"),
    ("temperature", "temperature_k"),
    ("atomic_mass", "atomic_mass_kg"),
    ("lambda_1", "lambda_1_m"),
    ("lambda_2", "lambda_2_m"),
    ("gamma_intermediate", "gamma_intermediate_hz"),
    ("two_photon_width_fwhm", "two_photon_width_fwhm_hz"),
    ("transit_broadening", "transit_broadening_hz"),
    ("overlap_fraction", "overlap_fraction"),
)
OPERATING_KEYS = (
    ("intermediate_detuning", "intermediate_detuning_hz"),
    ("two_photon_detuning", "two_photon_detuning_hz"),
    ("pump_intensity", "pump_intensity_w_per_cm2"),
)
SCAN_KEYS = (
    ("center", "center_hz"),
    ("span", "span_hz"),
    ("samples", "samples"),
    ("trials", "trials"),
    ("drift_sigma", "drift_sigma_hz"),
    ("noise_sigma", "noise_sigma"),
    ("control_offset", "control_offset_hz"),
)
INT_FIELDS = {"samples", "trials"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    device: ResonatorParams = field(default_factory=ResonatorParams.critically_coupled)
    vapor: VaporParams = field(default_factory=VaporParams)
    operating_point: TpaOperatingPoint = field(default_factory=TpaOperatingPoint)
    scan: ScanConfig = field(default_factory=ScanConfig)
    calibration_target: float = DEFAULT_THROUGH_CHANGE
    output_dir: str = DEFAULT_OUTPUT_DIR
    seed: int = 0

    def __post_init__(self) -> None:
        # the session seed is authoritative for the scan's RNG
        if self.scan.rng_seed != self.seed:
            object.__setattr__(self, "scan", dataclasses.replace(self.scan, rng_seed=self.seed))


def _dump(obj, keys) -> dict[str, Any]:
    return {key: getattr(obj, name) for name, key in keys}


def _parse(table: dict, keys, section: str, required: bool = True) -> dict[str, Any]:
    known = {key: name for name, key in keys}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")
    out = {}
    for key, value in table.items():
        name = known[key]
        if name in INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
        else:
            value = float(value)
            if not math.isfinite(value):
                raise ConfigError(f"[{section}] {key} must be finite")
        out[name] = value
    if required:
        missing = [key for name, key in keys if name not in out]
        if missing:
            raise ConfigError(f"[{section}] missing keys: {', '.join(missing)}")
    return out


def to_dict(cfg: SessionConfig) -> dict[str, Any]:
    return {
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "calibration_target": cfg.calibration_target,
        "device": _dump(cfg.device, DEVICE_KEYS),
        "vapor": _dump(cfg.vapor, VAPOR_KEYS),
        "operating_point": _dump(cfg.operating_point, OPERATING_KEYS),
        "scan": _dump(cfg.scan, SCAN_KEYS),
    }


def from_dict(data: dict[str, Any]) -> SessionConfig:
    """Build and validate a session; missing sections fall back to defaults."""
    top = {"seed", "output_dir", "calibration_target", "device", "vapor", "operating_point", "scan"}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    base = SessionConfig()
    try:
        dev_table = data.get("device")
        if dev_table is None:
            device = base.device
        elif "loaded_q" in dev_table:
            device = ResonatorParams.critically_coupled(**_parse(dev_table, DEVICE_SHORTHAND_KEYS, "device", False))
        else:
            device = ResonatorParams(**_parse(dev_table, DEVICE_KEYS, "device", False))
        vapor = VaporParams(**_parse(data.get("vapor", {}), VAPOR_KEYS, "vapor", False))
        op = TpaOperatingPoint(**_parse(data.get("operating_point", {}), OPERATING_KEYS, "operating_point", False))
        scan = ScanConfig(**_parse(data.get("scan", {}), SCAN_KEYS, "scan", False))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    seed = data.get("seed", base.seed)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    target = data.get("calibration_target", base.calibration_target)
    if isinstance(target, bool) or not isinstance(target, (int, float)):
        raise ConfigError(f"calibration_target must be a number, got {target!r}")
    out_dir = data.get("output_dir", base.output_dir)
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir must be a string")
    return SessionConfig(device, vapor, op, scan, float(target), out_dir, seed)


def dumps(cfg: SessionConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def loads(text: str) -> SessionConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return from_dict(data)


def save(cfg: SessionConfig, path: str | Path) -> None:
    atomic_write_text(Path(path), dumps(cfg))


def load(path: str | Path) -> SessionConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)
