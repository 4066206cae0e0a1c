"""Multi-start simplex minimization over the compiled objectives."""
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

_EMPTY_INT = np.zeros(1, dtype=np.int64)


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    converged: bool
    nfev: int
    start_values: np.ndarray  # objective at each start point


def simplex(kind, x0, data, iparams, fparams, step=0.25, xtol=1e-7, ftol=1e-10,
            maxfev=4000):
    x0 = np.asarray(x0, dtype=float)
    steps = np.broadcast_to(np.asarray(step, dtype=float), x0.shape).copy()
    x, f, nfev, conv = K.nelder_mead(
        kind, x0, data, np.asarray(iparams, dtype=np.int64),
        np.asarray(fparams, dtype=float), steps, xtol, ftol, maxfev)
    return x, float(f), int(nfev), bool(conv)


def multistart(kind, starts, data, iparams, fparams, step=0.25, xtol=1e-7,
               ftol=1e-10, maxfev=4000, polish=True):
    """Run the simplex from every start and keep the best end point.

    The winner is restarted once (``polish``) since a collapsed simplex can
    stall short of the optimum.  Infeasible starts are skipped.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    data = np.ascontiguousarray(data, dtype=float)
    ip = np.asarray(iparams, dtype=np.int64)
    fp = np.asarray(fparams, dtype=float)
    f0 = np.array([K.objective(kind, s, data, ip, fp) for s in starts])
    best = None
    total = 0
    for s, fs in zip(starts, f0):
        if not np.isfinite(fs):
            continue
        x, f, nfev, conv = simplex(kind, s, data, ip, fp, step, xtol, ftol, maxfev)
        total += nfev
        if best is None or f < best[1]:
            best = (x, f, conv)
    if best is None:
        return MinimizeResult(starts[0], np.inf, False, total, f0)
    x, f, conv = best
    if polish:
        x2, f2, nfev, conv2 = simplex(kind, x, data, ip, fp, step * 0.2, xtol,
                                      ftol, maxfev)
        total += nfev
        if f2 <= f:
            x, f, conv = x2, f2, conv2 or conv
    return MinimizeResult(x, f, conv, total, f0)
