"""Static SVG figures: reference-cell profile, switching traces, Q sweep."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis_fit import FitResult  # noqa: E402
from .virtual_experiment import ScanTrace  # noqa: E402

GHZ = 1e9

# fixed salt and no timestamp keep the SVG output byte-stable
RC = {"svg.hashsalt": "zenoswitch", "svg.fonttype": "none", "figure.dpi": 100}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def plot_reference_profile(delta, signal, fit: FitResult, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(np.asarray(delta) / GHZ, signal, ".", ms=3, label="TPA signal")
        ax.plot(np.asarray(delta) / GHZ, fit.evaluate(delta), "-", label="fit")
        ax.text(0.35, 0.85, f"Fit: α/(Δ + f₀)², f₀ = {fit['f0'] / GHZ:.2f} GHz",
                transform=ax.transAxes)
        ax.set_xlabel("Δ (GHz)")
        ax.set_ylabel("TPA signal (normalized)")
        ax.legend(loc="lower left")
        fig.tight_layout()
        return _save(fig, path)


def plot_switching(tpa_avg: ScanTrace, control_avg: ScanTrace, difference: ScanTrace, path) -> Path:
    """Upper panel: through and drop for both conditions. Lower panel: tpa - control."""
    with plt.rc_context(RC):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(5, 6), sharex=True)
        for trace, color, name in ((control_avg, "tab:blue", "control"), (tpa_avg, "tab:red", "TPA")):
            x = trace.axis / GHZ
            top.plot(x, trace.through, color=color, label=f"{name} through")
            top.plot(x, trace.drop, color=color, ls="--", label=f"{name} drop")
        top.set_ylabel("Transmission")
        top.legend(fontsize=7, loc="center right")
        x = difference.axis / GHZ
        bottom.plot(x, difference.through, color="k", label="through")
        bottom.plot(x, difference.drop, color="k", ls="--", label="drop")
        bottom.axhline(0.0, color="0.6", lw=0.8)
        bottom.set_xlabel("Δ (GHz)")
        bottom.set_ylabel("Difference (TPA - control)")
        bottom.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def plot_sweep(x, y, xlabel: str, ylabel: str, path, logx: bool = True) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(x, y, "o-", ms=3)
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        return _save(fig, path)
