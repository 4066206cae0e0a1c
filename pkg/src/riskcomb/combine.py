"""Forecast combination: equal weights, median, relative-score (RS) and
minimum-score (MS) weights, and the six MCS-trimmed predictors."""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _kernels as K
from .core import RiskForecastPair
from .exceptions import CombinationError, ConfigError
from .mcs import run_mcs
from .scoring import (al_array, fz0_array, penalize_invalid,
                      weighted_loss_series)

logger = logging.getLogger(__name__)

SCHEMES = ("ew", "median", "rs", "ms")
BENCHMARKS = ("EW-Comb", "Median-Comb", "RS-Comb", "MS-Comb")
# predictor -> (training loss kind, scheme)
MCS_PREDICTORS = {
    "MCS-Comb": ("unweighted", "ew"),
    "WL-MCS-Comb": ("weighted", "ew"),
    "MCS-RS-Comb": ("unweighted", "rs"),
    "WL-MCS-RS-Comb": ("weighted", "rs"),
    "MCS-MS-Comb": ("unweighted", "ms"),
    "WL-MCS-MS-Comb": ("weighted", "ms"),
}
PREDICTORS = BENCHMARKS + tuple(MCS_PREDICTORS)
MIN_HISTORY = 50
LOG_PSI_BOUNDS = (-6.0, 2.0)
PSI_GRID = np.linspace(*LOG_PSI_BOUNDS, 17)


@dataclass
class CombinationWeights:
    scheme: str
    members: list
    w: np.ndarray | None = None
    w_q: np.ndarray | None = None
    w_s: np.ndarray | None = None
    psi: float | None = None
    theta: np.ndarray | None = None     # MS logits, reusable as a warm start
    objective: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown combination scheme {self.scheme!r}")
        self.members = [str(m) for m in self.members]
        if not self.members:
            raise CombinationError("empty member set")

    def to_dict(self):
        out = {"scheme": self.scheme, "members": list(self.members)}
        for key in ("w", "w_q", "w_s"):
            v = getattr(self, key)
            if v is not None:
                out[key] = [float(x) for x in v]
        if self.psi is not None:
            out["psi"] = float(self.psi)
        return out


def _stack(forecasts):
    if len(forecasts) == 0:
        raise CombinationError("cannot combine an empty member set")
    var = np.array([f.var for f in forecasts], dtype=float)
    es = np.array([f.es for f in forecasts], dtype=float)
    return var, es, forecasts[0].tau


def ew_combine(forecasts):
    var, es, tau = _stack(forecasts)
    return RiskForecastPair(float(var.mean()), float(es.mean()), tau)


def median_combine(forecasts):
    var, es, tau = _stack(forecasts)
    return RiskForecastPair(float(np.median(var)), float(np.median(es)), tau)


def _check_history(var, es, returns):
    var = np.asarray(var, dtype=float)
    es = np.asarray(es, dtype=float)
    r = np.asarray(returns, dtype=float)
    if var.ndim == 1:
        var, es = var[:, None], es[:, None]
    if var.shape != es.shape or var.shape[0] != r.size:
        raise CombinationError("member history and returns are not aligned")
    if var.shape[1] < 1:
        raise CombinationError("empty member set")
    if r.size < MIN_HISTORY:
        raise CombinationError(f"combination weights need at least {MIN_HISTORY} "
                               f"days of history, got {r.size}")
    return var, es, r


def _score_sum(r, var, es, tau, kind):
    """Column sums of the chosen scoring function; +inf where a member ever
    issues ES >= 0."""
    f = al_array if kind == "al" else fz0_array
    vals = f(r[:, None] if var.ndim == 2 else r, var, es, tau)
    s = np.sum(vals, axis=0)
    return np.where(np.isfinite(s), s, np.inf)


def rs_weights(loss_sums, psi):
    """w_m proportional to exp(-psi S_m), computed with the minimum shifted
    out so that large sums cannot overflow.  Infinite sums get zero weight."""
    s = np.asarray(loss_sums, dtype=float)
    if psi < 0:
        raise CombinationError(f"psi must be non-negative, got {psi}")
    ok = np.isfinite(s)
    if not ok.any():
        raise CombinationError("every member has an infinite loss sum")
    w = np.zeros(s.size)
    w[ok] = np.exp(-psi * (s[ok] - s[ok].min()))
    return w / w.sum()


def fit_rs_weights(var, es, returns, tau, members=None, psi=None, objective="al"):
    """RS weights on a member history (days x members).

    With ``psi=None`` the tuning parameter minimizes the score of the
    combined forecasts over the same history: a 17-point grid on log10(psi)
    in [-6, 2] locates the best bracket, golden-section search refines it.
    """
    var, es, r = _check_history(var, es, returns)
    members = list(members) if members is not None else [str(k) for k in range(var.shape[1])]
    sums = _score_sum(r, var, es, tau, objective)

    def combined_score(log_psi):
        w = rs_weights(sums, 10.0 ** log_psi)
        s = _score_sum(r, var @ w, es @ w, tau, objective)
        return float(s)

    if psi is None:
        if var.shape[1] == 1:
            psi = 1.0
        else:
            grid = np.array([combined_score(x) for x in PSI_GRID])
            k = int(np.argmin(grid))
            best_x, best_f = PSI_GRID[k], grid[k]
            if 0 < k < PSI_GRID.size - 1 and np.isfinite(best_f) \
                    and best_f < grid[k - 1] and best_f < grid[k + 1]:
                res = optimize.minimize_scalar(
                    combined_score, method="golden",
                    bracket=(PSI_GRID[k - 1], best_x, PSI_GRID[k + 1]),
                    options={"xtol": 1e-6})
                x = float(np.clip(res.x, *LOG_PSI_BOUNDS))
                if combined_score(x) < best_f:
                    best_x = x
            psi = 10.0 ** best_x
    w = rs_weights(sums, psi)
    return CombinationWeights("rs", members, w=w, psi=float(psi),
                              objective=float(_score_sum(r, var @ w, es @ w, tau, objective)))


def _softmax_last_zero(z):
    z = np.append(np.asarray(z, dtype=float), 0.0)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def _logits(w):
    w = np.maximum(np.asarray(w, dtype=float), 1e-12)
    return np.log(w[:-1]) - np.log(w[-1])


def ms_theta_to_weights(theta, m):
    theta = np.asarray(theta, dtype=float)
    return _softmax_last_zero(theta[:m - 1]), _softmax_last_zero(theta[m - 1:])


def fit_ms_weights(var, es, returns, tau, members=None, n_random=20, seed=0,
                   warm_start=None, objective="al"):
    """MS weights: the VaR weights w_q and ES-spread weights w_s minimizing
    the summed score of

        VaR_c = sum_m w_q[m] VaR_m,   ES_c = VaR_c + sum_m w_s[m] (ES_m - VaR_m).

    Both simplices are parameterized by softmax logits with the last member
    pinned at zero.  Starts: the equal-weight point, ``warm_start`` logits if
    given, and ``n_random`` uniform simplex points; L-BFGS-B from each, the
    best finite minimum wins.  A warm start with ``n_random=0`` is used alone.
    """
    var, es, r = _check_history(var, es, returns)
    m = var.shape[1]
    members = list(members) if members is not None else [str(k) for k in range(m)]
    if m == 1:
        one = np.ones(1)
        return CombinationWeights("ms", members, w_q=one, w_s=one.copy(),
                                  theta=np.zeros(0))
    use_fz0 = objective == "fz0"
    var = np.ascontiguousarray(var)
    es = np.ascontiguousarray(es)
    r = np.ascontiguousarray(r)

    def fun(theta):
        f, g = K.ms_loss_grad(theta, var, es, r, tau, use_fz0)
        if not np.isfinite(f):
            return 1e300, np.zeros_like(theta)
        return f, g

    starts = [np.zeros(2 * (m - 1))]
    if (warm_start is not None and np.size(warm_start) == 2 * (m - 1)
            and np.all(np.isfinite(warm_start))):
        # a warm start without random starts is a re-fit: start there only
        warm_start = np.asarray(warm_start, dtype=float)
        starts = [warm_start] if n_random == 0 else [warm_start] + starts
    if n_random > 0:
        rng = np.random.default_rng(seed)
        for _ in range(n_random):
            wq = rng.dirichlet(np.ones(m))
            ws = rng.dirichlet(np.ones(m))
            starts.append(np.concatenate([_logits(wq), _logits(ws)]))
    best = None
    for x0 in starts:
        f0, _ = fun(x0)
        if f0 >= 1e300:
            continue
        res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                                options={"maxiter": 500, "gtol": 1e-8})
        if np.isfinite(res.fun) and res.fun < 1e300 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise CombinationError("MS weights: every start gives a non-finite score")
    w_q, w_s = ms_theta_to_weights(best.x, m)
    return CombinationWeights("ms", members, w_q=w_q, w_s=w_s, theta=best.x.copy(),
                              objective=float(best.fun))


def combine_arrays(weights, var, es):
    """Apply fitted weights to member arrays whose last axis follows
    ``weights.members``.  Works for a single day or a days x members panel."""
    var = np.asarray(var, dtype=float)
    es = np.asarray(es, dtype=float)
    if var.shape[-1] != len(weights.members):
        raise CombinationError(f"expected {len(weights.members)} members, "
                               f"got {var.shape[-1]}")
    s = weights.scheme
    if s == "median":
        return np.median(var, axis=-1), np.median(es, axis=-1)
    if s == "ew":
        return var.mean(axis=-1), es.mean(axis=-1)
    if s == "rs":
        return var @ weights.w, es @ weights.w
    v = var @ weights.w_q
    return v, v + (es - var) @ weights.w_s


def apply_weights(weights, today):
    """Combine today's member forecasts, given as a mapping model -> pair."""
    missing = [m for m in weights.members if m not in today]
    if missing:
        raise CombinationError(f"no forecast today for member {missing[0]!r}")
    pairs = [today[m] for m in weights.members]
    var, es, tau = _stack(pairs)
    v, e = combine_arrays(weights, var, es)
    return RiskForecastPair(float(v), float(e), tau)


def fit_weights(scheme, var, es, returns, tau, members, objective="al", seed=0,
                n_random=20, warm_start=None):
    if scheme in ("ew", "median"):
        return CombinationWeights(scheme, members)
    if scheme == "rs":
        return fit_rs_weights(var, es, returns, tau, members, objective=objective)
    if scheme == "ms":
        return fit_ms_weights(var, es, returns, tau, members, n_random=n_random,
                              seed=seed, warm_start=warm_start, objective=objective)
    raise ConfigError(f"unknown combination scheme {scheme!r}")


def _remap_warm(prev, members):
    """MS logits for ``members`` built from earlier MS weights: kept members
    keep their weight, newcomers get 1/m, then both simplices renormalize."""
    if prev is None or prev.scheme != "ms":
        return None
    m = len(members)
    if m == 1:
        return None
    if prev.members == list(members):
        return prev.theta
    old = {k: i for i, k in enumerate(prev.members)}
    out = []
    for w in (prev.w_q, prev.w_s):
        v = np.array([w[old[k]] if k in old else 1.0 / m for k in members])
        v = np.maximum(v, 1e-12)        # kept weights may all have underflowed to 0
        out.append(_logits(v / v.sum()))
    return np.concatenate(out)


@dataclass
class MCSPredictors:
    forecasts: dict                         # predictor -> RiskForecastPair
    ssm: dict                               # loss kind -> SuperiorSet
    weights: dict = field(default_factory=dict)   # predictor -> CombinationWeights


def training_losses(var, es, returns, tau, models=None):
    """Unweighted FZ0 training losses with invalid cells penalized."""
    raw = fz0_array(np.asarray(returns, dtype=float)[:, None], var, es, tau)
    values, _ = penalize_invalid(raw, models)
    return values


def build_mcs_predictors(models, var, es, returns, tau, today_var, today_es, lam=0.06,
                         alpha=0.25, b=1000, mean_block=10, seed=0, losses=None,
                         objective="al", ms_starts=20, warm=None):
    """The six MCS-trimmed predictors for one step.

    ``var``/``es`` hold the training history (days x models) and
    ``today_var``/``today_es`` the forecasts for the target day.  Unweighted
    and lambda-weighted FZ0 losses each feed a training MCS; EW, RS and MS
    weights are then fitted on the survivors' history.  ``losses`` may carry
    precomputed unweighted losses.  ``warm`` maps predictor -> weights from an
    earlier step; the MS fit then starts only from those weights carried
    over to the current survivors.
    """
    models = [str(m) for m in models]
    var = np.asarray(var, dtype=float)
    es = np.asarray(es, dtype=float)
    if losses is None:
        losses = training_losses(var, es, returns, tau, models)
    panels = {"unweighted": losses, "weighted": weighted_loss_series(losses, lam)}
    ssm = {kind: run_mcs(panels[kind], alpha=alpha, b=b, mean_block=mean_block,
                         seed=seed, models=models) for kind in panels}
    warm = warm or {}
    out, weights = {}, {}
    for name, (kind, scheme) in MCS_PREDICTORS.items():
        survivors = ssm[kind].survivors
        cols = [models.index(s) for s in survivors]
        ws_theta = _remap_warm(warm.get(name), survivors)
        w = fit_weights(scheme, var[:, cols], es[:, cols], returns, tau, survivors,
                        objective=objective, seed=seed,
                        n_random=0 if ws_theta is not None else ms_starts,
                        warm_start=ws_theta)
        v, e = combine_arrays(w, today_var[cols], today_es[cols])
        out[name] = RiskForecastPair(float(v), float(e), tau)
        weights[name] = w
    return MCSPredictors(out, ssm, weights)


class RiskCombiner(BaseEstimator):
    """Untrimmed combination of a member panel.

    Parameters
    ----------
    scheme : {'ew', 'median', 'rs', 'ms'}
    tau : float
    objective : {'al', 'fz0'}
        Scoring function used to fit RS and MS weights.
    n_random : int
        Random simplex starts for MS.
    seed : int
    """

    def __init__(self, scheme="ew", tau=0.025, objective="al", n_random=20, seed=0):
        self.scheme = scheme
        self.tau = tau
        self.objective = objective
        self.n_random = n_random
        self.seed = seed

    def fit(self, var, es, returns, members=None):
        var = np.asarray(var, dtype=float)
        members = members if members is not None else [str(k) for k in range(var.shape[1])]
        if self.scheme in ("ew", "median"):
            self.weights_ = CombinationWeights(self.scheme, members)
        else:
            self.weights_ = fit_weights(self.scheme, var, es, returns, self.tau, members,
                                        self.objective, self.seed, self.n_random)
        return self

    def predict(self, var, es):
        """Combined (VaR, ES) arrays for member forecasts (days x members)."""
        check_is_fitted(self, "weights_")
        return combine_arrays(self.weights_, var, es)


class MCSCombiner(BaseEstimator):
    """Training MCS followed by a combination over the survivors.

    ``loss_kind='weighted'`` trims on exponentially smoothed FZ0 losses
    with smoothing ``lam``.
    """

    def __init__(self, scheme="ew", loss_kind="unweighted", tau=0.025, lam=0.06,
                 alpha=0.25, n_boot=1000, block=10, objective="al", n_random=20, seed=0):
        self.scheme = scheme
        self.loss_kind = loss_kind
        self.tau = tau
        self.lam = lam
        self.alpha = alpha
        self.n_boot = n_boot
        self.block = block
        self.objective = objective
        self.n_random = n_random
        self.seed = seed

    def fit(self, var, es, returns, members=None):
        var = np.asarray(var, dtype=float)
        es = np.asarray(es, dtype=float)
        members = [str(m) for m in (members if members is not None
                                    else range(var.shape[1]))]
        losses = training_losses(var, es, returns, self.tau, members)
        if self.loss_kind == "weighted":
            losses = weighted_loss_series(losses, self.lam)
        elif self.loss_kind != "unweighted":
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        self.superior_set_ = run_mcs(losses, self.alpha, self.n_boot, self.block,
                                     self.seed, members)
        self.members_ = members
        cols = [members.index(s) for s in self.superior_set_.survivors]
        self.columns_ = cols
        self.weights_ = fit_weights(self.scheme, var[:, cols], es[:, cols], returns,
                                    self.tau, self.superior_set_.survivors,
                                    self.objective, self.seed, self.n_random)
        return self

    def predict(self, var, es):
        check_is_fitted(self, "weights_")
        var = np.asarray(var, dtype=float)[..., self.columns_]
        es = np.asarray(es, dtype=float)[..., self.columns_]
        return combine_arrays(self.weights_, var, es)


__all__ = [
    "BENCHMARKS", "MCS_PREDICTORS", "PREDICTORS", "CombinationWeights", "MCSPredictors",
    "MCSCombiner", "RiskCombiner", "apply_weights", "build_mcs_predictors",
    "combine_arrays", "ew_combine", "fit_ms_weights", "fit_rs_weights", "fit_weights",
    "median_combine", "ms_theta_to_weights", "rs_weights", "training_losses",
]
