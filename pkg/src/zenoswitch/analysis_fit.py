"""Data reduction for scan sessions.

Pipeline per session: fit every trace's drop-port peak to a Lorentzian,
shift its axis so the fitted center sits at Delta = 0, average each
condition on a common grid, subtract control from TPA and quantify the
change from fitted models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .virtual_experiment import CONTROL, DIFFERENCE, TPA, ScanTrace

PEAK = "peak"
DIP = "dip"
CHANNEL_FOR_POLARITY = {PEAK: "drop", DIP: "through"}

LORENTZIAN_PARAMS = ("amplitude", "center", "fwhm", "baseline")
# half-width of the core fit window, in units of the fitted FWHM
CORE_WINDOW = 0.25


@dataclass
class FitResult:
    """Outcome of a model fit.

    ``params`` and ``uncertainties`` are keyed by parameter name; the
    uncertainties are square roots of the diagonal of s^2 (J^T J)^-1.
    """

    model: str
    params: dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int
    uncertainties: dict[str, float] = field(default_factory=dict)
    polarity: str = ""

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.model == "lorentzian":
            sign = 1.0 if self.polarity == PEAK else -1.0
            return lorentzian(x, p["amplitude"], p["center"], p["fwhm"], p["baseline"], sign)
        if self.model == "inverse_square":
            return p["alpha"] / (x + p["f0"]) ** 2
        raise ValueError(f"unknown model {self.model!r}")


def lorentzian(x, amplitude, center, fwhm, baseline, sign=1.0):
    """baseline + sign * amplitude * (fwhm/2)^2 / ((x - center)^2 + (fwhm/2)^2)"""
    hw2 = (fwhm / 2) ** 2
    return baseline + sign * amplitude * hw2 / ((x - center) ** 2 + hw2)


def _lorentzian_jacobian(x, p, sign):
    a, x0, g, _ = p
    h = g / 2
    u = x - x0
    den = u * u + h * h
    jac = np.empty((x.size, 4))
    jac[:, 0] = sign * h * h / den
    jac[:, 1] = sign * a * 2 * u * h * h / den**2
    jac[:, 2] = sign * a * h * u * u / den**2
    jac[:, 3] = 1.0
    return jac


def _initial_lorentzian(x, y, sign):
    n = len(x)
    edge = max(2, n // 10)
    baseline = 0.5 * (np.median(y[:edge]) + np.median(y[-edge:]))
    k = int(np.argmax(sign * y))
    amp = sign * (y[k] - baseline)
    if not amp > 0:
        raise ValueError("trace has no extremum of the requested polarity")
    half = baseline + sign * amp / 2
    s = sign * (y - half)  # positive inside the half-maximum region

    left = x[0]
    for i in range(k, 0, -1):
        if s[i - 1] <= 0 < s[i]:
            left = x[i - 1] + (x[i] - x[i - 1]) * (-s[i - 1]) / (s[i] - s[i - 1])
            break
    right = x[-1]
    for i in range(k, n - 1):
        if s[i + 1] <= 0 < s[i]:
            right = x[i] + (x[i + 1] - x[i]) * s[i] / (s[i] - s[i + 1])
            break
    fwhm = right - left
    if not fwhm > 0:
        fwhm = (x[-1] - x[0]) / 4
    return np.array([amp, x[k], fwhm, baseline])


def fit_lorentzian_xy(x, y, polarity: str = PEAK, tol: float = 1e-10, max_iter: int = 200) -> FitResult:
    """Gauss-Newton fit of a single Lorentzian peak or dip plus baseline.

    Steps are halved while they increase the sum of squares.  Converged
    means the relative parameter change of the last step fell below
    ``tol`` (parameters compared in units of the scan span).
    """
    if polarity not in (PEAK, DIP):
        raise ValueError(f"polarity must be 'peak' or 'dip', got {polarity!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 8:
        raise ValueError(f"need at least 8 samples, got {x.size}")
    if np.ptp(y) == 0:
        raise ValueError("degenerate flat trace")
    sign = 1.0 if polarity == PEAK else -1.0

    # fit in scaled coordinates: x -> (x - mid) / span
    mid = 0.5 * (x[0] + x[-1])
    span = float(np.ptp(x))
    xs = (x - mid) / span
    p0 = _initial_lorentzian(x, y, sign)
    p = np.array([p0[0], (p0[1] - mid) / span, p0[2] / span, p0[3]])

    def resid(q):
        return lorentzian(xs, q[0], q[1], q[2], q[3], sign) - y

    r = resid(p)
    sse = float(r @ r)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jac = _lorentzian_jacobian(xs, p, sign)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        rel = np.max(np.abs(step) / np.maximum(np.abs(p), 1.0))
        if rel < tol:
            p = p + step
            r = resid(p)
            sse = float(r @ r)
            converged = True
            break
        lam = 1.0
        while lam > 1e-10:
            trial = p + lam * step
            if trial[2] > 0:
                rt = resid(trial)
                st = float(rt @ rt)
                if st <= sse:
                    break
            lam /= 2
        else:
            break  # no descent along the Gauss-Newton direction
        p, r, sse = trial, rt, st
        if lam * rel < tol:
            converged = True
            break

    p[2] = abs(p[2])
    params = dict(zip(LORENTZIAN_PARAMS, (p[0], p[1] * span + mid, p[2] * span, p[3])))
    params = {k: float(v) for k, v in params.items()}
    dof = max(x.size - 4, 1)
    jac = _lorentzian_jacobian(xs, p, sign)
    scale = np.array([1.0, span, span, 1.0])
    try:
        cov = np.linalg.inv(jac.T @ jac) * (sse / dof)
        sd = np.sqrt(np.clip(np.diag(cov), 0, None)) * scale
    except np.linalg.LinAlgError:
        sd = np.full(4, math.nan)
    return FitResult(
        model="lorentzian",
        params=params,
        residual_norm=math.sqrt(sse / x.size),
        converged=converged,
        iterations=it,
        uncertainties={k: float(v) for k, v in zip(LORENTZIAN_PARAMS, sd)},
        polarity=polarity,
    )


def fit_lorentzian(trace: ScanTrace, polarity: str = PEAK, **kwargs) -> FitResult:
    """Fit the drop-port peak (``peak``) or the through-port dip (``dip``) of a trace."""
    y = getattr(trace, CHANNEL_FOR_POLARITY[polarity])
    return fit_lorentzian_xy(trace.axis, y, polarity, **kwargs)


def rezero(trace: ScanTrace, f0: float) -> ScanTrace:
    """Move to the Delta = delta_Rb - f0 axis; signals are untouched."""
    return ScanTrace(
        delta=trace.delta,
        through=trace.through,
        drop=trace.drop,
        condition=trace.condition,
        trial_id=trace.trial_id,
        true_center=trace.true_center - f0,
        offset=trace.offset + f0,
    )


def common_grid(traces: Sequence[ScanTrace]) -> np.ndarray:
    """Intersection of the traces' ranges, sampled at the finest input spacing."""
    axes = [t.axis for t in traces]
    if all(np.array_equal(axes[0], a) for a in axes[1:]):
        return axes[0]
    lo = max(a[0] for a in axes)
    hi = min(a[-1] for a in axes)
    if not hi > lo:
        raise ValueError("detuning ranges do not overlap")
    step = min(float(np.min(np.diff(a))) for a in axes)
    n = int(math.floor((hi - lo) / step * (1 + 1e-12))) + 1
    return lo + step * np.arange(n)


def _on_grid(trace: ScanTrace, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ax = trace.axis
    if ax.shape == grid.shape and np.array_equal(ax, grid):
        return trace.through, trace.drop
    return np.interp(grid, ax, trace.through), np.interp(grid, ax, trace.drop)


def average_trials(traces: Sequence[ScanTrace]) -> ScanTrace:
    """Pointwise mean of traces after linear interpolation onto a common grid."""
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to average")
    if len(traces) == 1:
        return traces[0]
    grid = common_grid(traces)
    sampled = [_on_grid(t, grid) for t in traces]
    through = np.mean([s[0] for s in sampled], axis=0)
    drop = np.mean([s[1] for s in sampled], axis=0)
    conds = {t.condition for t in traces}
    return ScanTrace(grid, through, drop, conds.pop() if len(conds) == 1 else "mixed", -1)


def difference_signal(tpa_avg: ScanTrace, control_avg: ScanTrace) -> ScanTrace:
    """tpa - control for both channels on the common grid."""
    grid = common_grid([tpa_avg, control_avg])
    t_thr, t_drp = _on_grid(tpa_avg, grid)
    c_thr, c_drp = _on_grid(control_avg, grid)
    return ScanTrace(grid, t_thr - c_thr, t_drp - c_drp, DIFFERENCE, -1)


def fit_inverse_square(x, y, f0_guess: float | None = None, max_iter: int = 200) -> FitResult:
    """Fit y = alpha / (x + f0)^2 with the pole kept outside the data.

    alpha enters linearly and is eliminated in closed form for each f0;
    f0 is located by a bracketed root search on the derivative of the
    profiled sum of squares.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if f0_guess is not None and (x[0] + f0_guess) * (x[-1] + f0_guess) <= 0:
        raise ValueError("singularity x = -f0 lies inside the data range")
    # the pole sits beyond whichever end carries the larger signal
    pole_left = abs(y[0]) >= abs(y[-1]) if f0_guess is None else x[0] + f0_guess > 0
    width = x[-1] - x[0]
    if pole_left:
        gap = lambda f0: x[0] + f0  # distance from pole to nearest sample
        to_f0 = lambda g: g - x[0]
    else:
        gap = lambda f0: -(x[-1] + f0)
        to_f0 = lambda g: -g - x[-1]

    def alpha_for(f0):
        g = 1.0 / (x + f0) ** 2
        return float(g @ y / (g @ g))

    def sse(f0):
        r = alpha_for(f0) / (x + f0) ** 2 - y
        return float(r @ r)

    def dsse(f0):
        a = alpha_for(f0)
        r = a / (x + f0) ** 2 - y
        return float(r @ (-2 * a / (x + f0) ** 3))

    # coarse log scan of the pole distance, then refine on dSSE/df0 = 0
    gaps = width * np.logspace(-4, 4, 161)
    vals = [sse(to_f0(g)) for g in gaps]
    k = int(np.argmin(vals))
    converged = False
    iterations = len(gaps)
    if 0 < k < len(gaps) - 1:
        a, b = to_f0(gaps[k - 1]), to_f0(gaps[k + 1])
        da, db = dsse(a), dsse(b)
        if da * db < 0:
            f0, info = brentq(dsse, a, b, xtol=1e-14 * abs(b - a) + 1e-300, rtol=1e-15,
                              maxiter=max_iter, full_output=True)
            converged = info.converged
            iterations += info.iterations
        else:
            f0 = to_f0(gaps[k])
    else:
        f0 = to_f0(gaps[k])
    alpha = alpha_for(f0)
    r = alpha / (x + f0) ** 2 - y
    sse_min = float(r @ r)
    dof = max(x.size - 2, 1)
    g = 1.0 / (x + f0) ** 2
    jac = np.column_stack([g, -2 * alpha / (x + f0) ** 3])
    try:
        cov = np.linalg.inv(jac.T @ jac) * (sse_min / dof)
        sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        sd = np.full(2, math.nan)
    return FitResult(
        model="inverse_square",
        params={"alpha": alpha, "f0": float(f0)},
        residual_norm=math.sqrt(sse_min / x.size),
        converged=converged,
        iterations=iterations,
        uncertainties={"alpha": float(sd[0]), "f0": float(sd[1])},
    )


@dataclass(frozen=True)
class ContrastMetrics:
    """Switching figures of merit, all taken from fitted Lorentzians.

    ``through_change`` and ``drop_change`` are tpa minus control at
    Delta = 0.  ``dip_depth_change`` is the relative change of the
    through-port dip depth (baseline minus value at Delta = 0).  The
    ``peak_*_at`` fields locate the largest through-port increase and the
    largest drop-port decrease.
    """

    through_change: float
    drop_change: float
    dip_depth_change: float
    peak_through_difference_at: float
    peak_drop_difference_at: float

    def as_dict(self) -> dict[str, float]:
        return {
            "through_change": self.through_change,
            "drop_change": self.drop_change,
            "dip_depth_change": self.dip_depth_change,
            "peak_through_difference_at_hz": self.peak_through_difference_at,
            "peak_drop_difference_at_hz": self.peak_drop_difference_at,
        }


def _peak_location(grid, diff):
    """Abscissa of the largest positive excursion of ``diff`` (0 if none)."""
    if not np.any(diff > 0):
        return 0.0
    return float(grid[int(np.argmax(diff))])


def fit_core(trace: ScanTrace, polarity: str, window: float | None = CORE_WINDOW) -> FitResult:
    """Lorentzian fit refined on |Delta - center| <= window * fwhm.

    Restricting the fit to the resonance core keeps a lineshape that is
    skewed by detuning-dependent loss from biasing the value at the center.
    """
    fit = fit_lorentzian(trace, polarity)
    if window is None:
        return fit
    x = trace.axis
    y = getattr(trace, CHANNEL_FOR_POLARITY[polarity])
    mask = np.abs(x - fit["center"]) <= window * fit["fwhm"]
    if np.count_nonzero(mask) < 8:
        return fit
    return fit_lorentzian_xy(x[mask], y[mask], polarity)


def contrast_metrics(tpa_avg: ScanTrace, control_avg: ScanTrace, window: float | None = CORE_WINDOW) -> ContrastMetrics:
    """Compare re-zeroed averages through fitted Lorentzians.

    Values at Delta = 0 come from core-window fits; baselines and the
    locations of the largest model difference from full-range fits.
    """
    pairs = ((TPA, tpa_avg), (CONTROL, control_avg))
    full = {(c, pol): fit_lorentzian(t, pol) for c, t in pairs for pol in (PEAK, DIP)}
    core = {(c, pol): fit_core(t, pol, window) for c, t in pairs for pol in (PEAK, DIP)}
    at0 = {k: float(f.evaluate(0.0)) for k, f in core.items()}
    d_thr = at0[(TPA, DIP)] - at0[(CONTROL, DIP)]
    d_drp = at0[(TPA, PEAK)] - at0[(CONTROL, PEAK)]
    depth_t = full[(TPA, DIP)]["baseline"] - at0[(TPA, DIP)]
    depth_c = full[(CONTROL, DIP)]["baseline"] - at0[(CONTROL, DIP)]
    rel_depth = 0.0 if depth_t == depth_c else (depth_t - depth_c) / depth_c
    grid = common_grid([tpa_avg, control_avg])
    diff_thr = full[(TPA, DIP)].evaluate(grid) - full[(CONTROL, DIP)].evaluate(grid)
    diff_drp = full[(TPA, PEAK)].evaluate(grid) - full[(CONTROL, PEAK)].evaluate(grid)
    return ContrastMetrics(d_thr, d_drp, rel_depth, _peak_location(grid, diff_thr), _peak_location(grid, -diff_drp))


def normalize_to_baseline(trace: ScanTrace) -> ScanTrace:
    """Divide both channels by the off-resonance through-port level.

    Removes any input-power scaling common to both ports.  The level is the
    mean of the outer tenth of samples on each side; a mean (unlike a
    median) scales exactly with the signal, so traces recorded at
    different input powers normalize without bias.
    """
    n = len(trace)
    edge = max(2, n // 10)
    level = 0.5 * (np.mean(trace.through[:edge]) + np.mean(trace.through[-edge:]))
    if not level > 0:
        raise ValueError("off-resonance baseline is not positive")
    return ScanTrace(trace.delta, trace.through / level, trace.drop / level, trace.condition,
                     trace.trial_id, trace.true_center, trace.offset)


@dataclass
class SessionReduction:
    fits: list[FitResult]
    rezeroed: list[ScanTrace]
    tpa_average: ScanTrace
    control_average: ScanTrace
    difference: ScanTrace
    metrics: ContrastMetrics


def reduce_session(traces: Iterable[ScanTrace], anchor: str = "pair", normalize: bool = False) -> SessionReduction:
    """Fit, re-zero, average per condition, difference and quantify.

    Every trace gets a drop-port Lorentzian fit.  With ``anchor="trace"``
    each trace is re-zeroed on its own fitted center.  With the default
    ``anchor="pair"`` both traces of a trial are re-zeroed on the control
    trace's center: TPA loss varies across the scan and skews the TPA
    peak, while the control sees the bare cavity under the same drift.
    """
    if anchor not in ("pair", "trace"):
        raise ValueError(f"anchor must be 'pair' or 'trace', got {anchor!r}")
    traces = list(traces)
    if normalize:
        traces = [normalize_to_baseline(t) for t in traces]
    fits = [fit_lorentzian(t, PEAK) for t in traces]
    centers = [f["center"] for f in fits]
    if anchor == "pair":
        ctrl_center = {t.trial_id: f["center"] for t, f in zip(traces, fits) if t.condition == CONTROL}
        centers = [ctrl_center.get(t.trial_id, c) for t, c in zip(traces, centers)]
    rez = [rezero(t, c) for t, c in zip(traces, centers)]
    by_cond = {c: [t for t in rez if t.condition == c] for c in (TPA, CONTROL)}
    for c, group in by_cond.items():
        if not group:
            raise ValueError(f"session has no {c} traces")
    tpa_avg = average_trials(by_cond[TPA])
    ctrl_avg = average_trials(by_cond[CONTROL])
    diff = difference_signal(tpa_avg, ctrl_avg)
    return SessionReduction(fits, rez, tpa_avg, ctrl_avg, diff, contrast_metrics(tpa_avg, ctrl_avg))


@dataclass(frozen=True)
class PairedDifference:
    """Across-trial statistics of tpa - control at one Delta."""

    through_mean: float
    through_sem: float
    drop_mean: float
    drop_sem: float
    pairs: int

    @property
    def through_z(self) -> float:
        return self.through_mean / self.through_sem

    @property
    def drop_z(self) -> float:
        return self.drop_mean / self.drop_sem


def paired_difference(rezeroed: Sequence[ScanTrace], at: float = 0.0) -> PairedDifference:
    """Mean and standard error of per-trial (tpa - control) at Delta = ``at``."""
    tpa = {t.trial_id: t for t in rezeroed if t.condition == TPA}
    ctrl = {t.trial_id: t for t in rezeroed if t.condition == CONTROL}
    ids = sorted(set(tpa) & set(ctrl))
    if len(ids) < 2:
        raise ValueError("need at least two tpa/control pairs")
    d = np.array([
        [np.interp(at, tpa[i].axis, tpa[i].through) - np.interp(at, ctrl[i].axis, ctrl[i].through),
         np.interp(at, tpa[i].axis, tpa[i].drop) - np.interp(at, ctrl[i].axis, ctrl[i].drop)]
        for i in ids
    ])
    mean = d.mean(axis=0)
    sem = d.std(axis=0, ddof=1) / math.sqrt(len(ids))
    return PairedDifference(float(mean[0]), float(sem[0]), float(mean[1]), float(sem[1]), len(ids))
