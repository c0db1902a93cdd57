"""Independent reference computations shared by the test modules."""

import numpy as np

from zenoswitch.cmt_core import intensity_from_energy, steady_state


def energy_maps(a, b, drives, fns):
    """Single-pass energy maps U_a(U_b) and U_b(U_a) of the mutually loaded modes."""

    def fa(u_b):
        i_b = intensity_from_energy(u_b, b.mode_volume, b.group_index)
        return steady_state(a, 0.0, fns[0](i_b), drives[0]).energy

    def fb(u_a):
        i_a = intensity_from_energy(u_a, a.mode_volume, a.group_index)
        return steady_state(b, 0.0, fns[1](i_a), drives[1]).energy

    return fa, fb


def grid_fixed_point(a, b, drives, fns, n=200, rounds=1):
    """Brute-force minimizer of the fixed-point residual over an n x n energy grid.

    Returns the best grid point and the grid step.  With ``rounds > 1`` the
    grid is re-centered on the best point and shrunk to +-2 steps each round.
    """
    fa, fb = (np.vectorize(f) for f in energy_maps(a, b, drives, fns))
    scale = np.array([float(fa(0.0)), float(fb(0.0))])
    lo, hi = np.zeros(2), scale.copy()
    for _ in range(rounds):
        ua = np.linspace(lo[0], hi[0], n)
        ub = np.linspace(lo[1], hi[1], n)
        ra = (fa(ub)[None, :] - ua[:, None]) / scale[0]
        rb = (fb(ua)[:, None] - ub[None, :]) / scale[1]
        i, j = np.unravel_index(np.argmin(np.hypot(ra, rb)), ra.shape)
        best = np.array([ua[i], ub[j]])
        step = (hi - lo) / (n - 1)
        lo, hi = np.maximum(best - 2 * step, 0.0), best + 2 * step
    return best, step
