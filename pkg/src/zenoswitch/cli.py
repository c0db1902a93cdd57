"""Command-line interface.

Exit codes: 0 success, 2 configuration or sweep-spec error, 3 solver or
calibration failure, 4 trace schema violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .analysis_fit import fit_inverse_square, paired_difference, reduce_session
from .cmt_core import ConvergenceError
from .design_explorer import SweepSpec, UnreachableTarget, dual_resonant_power_estimate, run_sweep
from .plotting import plot_reference_profile, plot_switching, plot_sweep
from .traces_io import (
    TraceSchemaError,
    atomic_write_text,
    read_table,
    read_trace,
    read_trace_dir,
    trial_filename,
    write_json,
    write_table,
    write_trace,
)
from .vapor_tpa import CalibrationError, QuadratureError, calibrate_alpha, reference_cell_profile, tpa_loss_rate
from .virtual_experiment import run_no_vapor_control, run_paired_session

OUT_ENV = "ZENOSWITCH_OUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SCHEMA = 4


def default_config_text() -> str:
    return resources.files("zenoswitch").joinpath("data/default.toml").read_text()


def _load_config(args) -> cfgmod.SessionConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.loads(default_config_text())
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise cfgmod.ConfigError("--seed must be non-negative")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "control_offset_ghz", None) is not None:
        try:
            scan = dataclasses.replace(cfg.scan, control_offset=args.control_offset_ghz * 1e9)
        except ValueError as exc:
            raise cfgmod.ConfigError(str(exc)) from exc
        cfg = dataclasses.replace(cfg, scan=scan)
    return cfg


def _out_dir(args, cfg: cfgmod.SessionConfig | None = None, fallback: Path | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if fallback is not None:
        return fallback
    return Path(cfg.output_dir if cfg else cfgmod.DEFAULT_OUTPUT_DIR)


def _write_reduction(red, out: Path) -> dict:
    write_trace(red.tpa_average, out / "average_tpa.csv")
    write_trace(red.control_average, out / "average_control.csv")
    write_trace(red.difference, out / "difference.csv")
    summary = {"metrics": red.metrics.as_dict()}
    summary["mean_fitted_center_hz"] = float(np.mean([f["center"] for f in red.fits]))
    summary["fits_converged"] = int(sum(f.converged for f in red.fits))
    summary["fits_total"] = len(red.fits)
    try:
        pd = paired_difference(red.rezeroed)
        summary["paired_difference_at_zero"] = {
            "through_mean": pd.through_mean,
            "through_sem": pd.through_sem,
            "drop_mean": pd.drop_mean,
            "drop_sem": pd.drop_sem,
            "pairs": pd.pairs,
        }
    except ValueError:
        pass
    return summary


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    scan = cfg.scan
    if args.no_vapor:
        alpha = None
        traces = run_no_vapor_control(scan, cfg.device)
    else:
        alpha = calibrate_alpha(cfg.calibration_target, cfg.device, cfg.vapor, cfg.operating_point)
        traces = run_paired_session(scan, cfg.device, cfg.vapor, alpha, cfg.operating_point.pump_intensity)
    for t in traces:
        write_trace(t, out / "trials" / trial_filename(t))
    red = reduce_session(traces)
    summary = _write_reduction(red, out)
    summary.update({
        "seed": cfg.seed,
        "trials": scan.trials,
        "samples": scan.samples,
        "no_vapor": bool(args.no_vapor),
        "control_offset_hz": scan.control_offset,
        "trace_files": len(traces),
    })
    if alpha is not None:
        kx = tpa_loss_rate(cfg.vapor, cfg.operating_point, alpha)
        summary["alpha_cal"] = alpha
        summary["kappa_tpa_over_kappa_total"] = kx / cfg.device.kappa_total
        summary["calibration_target"] = cfg.calibration_target
    write_json(summary, out / "summary.json")
    print(f"wrote {len(traces)} trial traces and averages to {out}")
    m = red.metrics
    print(f"through change at 0: {m.through_change:+.5f}  drop change at 0: {m.drop_change:+.5f}")
    return EXIT_OK


def _fit_rows(red) -> str:
    lines = ["trial_id,condition,amplitude,center_hz,fwhm_hz,baseline,residual_norm,converged,iterations"]
    for t, f in zip(red.rezeroed, red.fits):
        p = f.params
        lines.append(",".join([
            str(t.trial_id), t.condition,
            *(format(p[k], ".17g") for k in ("amplitude", "center", "fwhm", "baseline")),
            format(f.residual_norm, ".17g"), str(int(f.converged)), str(f.iterations),
        ]))
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    traces = read_trace_dir(args.trace_dir)
    out = _out_dir(args, fallback=Path(args.trace_dir) / "analysis")
    try:
        red = reduce_session(traces, anchor=args.anchor)
    except ValueError as exc:
        raise TraceSchemaError(args.trace_dir, None, None, str(exc)) from exc
    atomic_write_text(out / "fits.csv", _fit_rows(red))
    summary = _write_reduction(red, out)
    write_json(summary, out / "metrics.json")
    m = red.metrics
    print(f"analyzed {len(traces)} traces; mean fitted center {summary['mean_fitted_center_hz'] / 1e9:.4f} GHz")
    print(f"through change at 0: {m.through_change:+.5f}  drop change at 0: {m.drop_change:+.5f}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    alpha = calibrate_alpha(cfg.calibration_target, cfg.device, cfg.vapor, cfg.operating_point)
    kx = tpa_loss_rate(cfg.vapor, cfg.operating_point, alpha)
    result = {
        "alpha_cal": alpha,
        "calibration_target": cfg.calibration_target,
        "kappa_tpa_rad_per_s": kx,
        "kappa_tpa_over_kappa_total": kx / cfg.device.kappa_total,
    }
    if args.dual_resonant:
        est = dual_resonant_power_estimate(cfg.device, cfg.vapor, alpha, cfg.operating_point)
        result["dual_resonant_power_780_w"] = est.power_780
        result["dual_resonant_power_1529_w"] = est.power_1529
    out = _out_dir(args, cfg)
    write_json(result, out / "calibration.json")
    print(f"alpha_cal = {alpha:.10g}  (kappa_tpa/kappa_tot = {result['kappa_tpa_over_kappa_total']:.6g})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not (args.points >= 1 and args.start > 0 and args.stop > 0):
        raise cfgmod.ConfigError("sweep needs points >= 1 and positive start/stop")
    grid = np.geomspace(args.start, args.stop, args.points) if not args.linear else np.linspace(args.start, args.stop, args.points)
    try:
        spec = SweepSpec(args.parameter, tuple(float(v) for v in grid))
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc)) from exc
    alpha = calibrate_alpha(cfg.calibration_target, cfg.device, cfg.vapor, cfg.operating_point)
    table = run_sweep(spec, cfg.device, cfg.vapor, cfg.operating_point, alpha)
    out = _out_dir(args, cfg)
    write_table(table, out / f"sweep_{args.parameter}.csv")
    plot_sweep(table[args.parameter], table["through_change"], args.parameter.replace("_", " "),
               "Through-port change at resonance", out / f"sweep_{args.parameter}.svg", logx=not args.linear)
    print(f"wrote sweep over {args.points} points to {out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    cfg = _load_config(args)
    src = Path(args.trace_dir)
    out = _out_dir(args, fallback=src / "figures")
    avg_dir = next((d for d in (src, src / "analysis") if (d / "average_tpa.csv").exists()), None)
    if avg_dir is not None:
        tpa = read_trace(avg_dir / "average_tpa.csv")
        ctrl = read_trace(avg_dir / "average_control.csv")
        diff = read_trace(avg_dir / "difference.csv")
    else:
        red = reduce_session(read_trace_dir(src))
        tpa, ctrl, diff = red.tpa_average, red.control_average, red.difference
    plot_switching(tpa, ctrl, diff, out / "switching.svg")

    # reference-cell profile on the scan window, with the inverse-square fit
    scan = cfg.scan
    delta = scan.axis - scan.center
    signal = reference_cell_profile(scan.axis, cfg.vapor, normalize=True)
    fit = fit_inverse_square(delta, signal)
    plot_reference_profile(delta, signal, fit, out / "reference_cell.svg")
    for sweep_csv in sorted(src.glob("sweep_*.csv")):
        table = read_table(sweep_csv)
        name = sweep_csv.stem[len("sweep_"):]
        if name in table and "through_change" in table:
            plot_sweep(table[name], table["through_change"], name.replace("_", " "),
                       "Through-port change at resonance", out / f"{sweep_csv.stem}.svg")
    print(f"wrote figures to {out}")
    return EXIT_OK


def cmd_config(args) -> int:
    text = default_config_text()
    if args.out:
            atomic_write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zenoswitch", description="Classical-Zeno switching simulator and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="session config (TOML); defaults to the shipped config")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or config output_dir)")
        if seed:
            p.add_argument("--seed", type=int, help="override the session seed")
        p.add_argument("--control-offset-ghz", type=float, help="override the control scan's 780 nm offset")

    p = sub.add_parser("simulate", help="simulate a paired tpa/control session")
    common(p)
    p.add_argument("--no-vapor", action="store_true", help="remove the atoms (no-vapor control)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="fit, re-zero, average and difference a trace directory")
    p.add_argument("trace_dir")
    p.add_argument("--out", help="output directory (default: TRACE_DIR/analysis)")
    p.add_argument("--anchor", choices=("pair", "trace"), default="pair", help="re-zeroing anchor")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="calibrate alpha_cal to the configured through-port change")
    common(p)
    p.add_argument("--dual-resonant", action="store_true", help="also project the both-beams-resonant power")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="parameter sweep of the on-resonance through change")
    common(p)
    p.add_argument("--parameter", default="intrinsic_q", help="intrinsic_q, pump_intensity or density")
    p.add_argument("--start", type=float, default=1e5)
    p.add_argument("--stop", type=float, default=1e7)
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--linear", action="store_true", help="linear instead of geometric grid")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="SVG figures from a simulate/analyze directory")
    p.add_argument("trace_dir")
    common(p)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("config", help="print or write the default session config")
    p.add_argument("--out", help="write to this path instead of stdout")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceSchemaError as exc:
        print(f"trace schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (CalibrationError, ConvergenceError, QuadratureError, UnreachableTarget) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
