"""Historical Simulation and CAViaR quantile models with joint ES estimation."""
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _kernels as K
from ._validation import check_series, check_tau
from .core import RiskForecastPair
from .exceptions import ConfigError, FitError, ModelOutputError
from .optimize import multistart

HS_WINDOWS = (25, 50, 100, 250, 500)
FORMS = ("sav", "as", "ig", "x")
_FORM_CODE = {"sav": K.FORM_SAV, "as": K.FORM_AS, "ig": K.FORM_IG, "x": K.FORM_X}
N_BETA = {"sav": 3, "as": 4, "ig": 3, "x": 3}
MIN_WINDOW = 250
INIT_OBS = 100


# ---------------------------------------------------------------------------
# Historical Simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HsSpec:
    w: int
    tau: float


def empirical_quantile(x, tau, method="lower"):
    """``lower``: the ceil(tau * n)-th smallest value; ``linear``: numpy's
    interpolating estimator."""
    x = np.asarray(x, dtype=float)
    if method == "linear":
        return float(np.quantile(x, tau))
    if method != "lower":
        raise ConfigError(f"unknown quantile method {method!r}")
    k = max(1, math.ceil(tau * x.size - 1e-9))
    return float(np.partition(x, k - 1)[k - 1])


def hs_var_es(x, tau, method="lower"):
    """(VaR, ES, empty_tail) for one lookback sample.  ``empty_tail`` flags
    that no observation lies strictly below VaR."""
    var = empirical_quantile(x, tau, method)
    tail = x[x <= var]
    es = float(tail.mean()) if tail.size else var
    return var, es, not np.any(x < var)


def hs_forecast(window, spec, method="lower"):
    r = check_series(window)
    if spec.w > r.size:
        raise ConfigError(f"HS lookback {spec.w} exceeds available history {r.size}")
    var, es, _ = hs_var_es(r[-spec.w:], spec.tau, method)
    return RiskForecastPair(var, es, spec.tau)


def hs_insample(r, w, tau, method="lower"):
    """In-sample HS path over a window: day i uses the w returns before it;
    the first w days reuse the sample of days 1..w."""
    r = np.asarray(r, dtype=float)
    n = r.size
    var = np.empty(n)
    es = np.empty(n)
    head_var, head_es, _ = hs_var_es(r[:w], tau, method)
    var[:w] = head_var
    es[:w] = head_es
    for i in range(w, n):
        var[i], es[i], _ = hs_var_es(r[i - w:i], tau, method)
    return var, es


class HistoricalSimulation(BaseEstimator):
    def __init__(self, window=250, tau=0.025, method="lower"):
        self.window = window
        self.tau = tau
        self.method = method

    def fit(self, returns):
        r = check_series(returns)
        check_tau(self.tau)
        if self.window > r.size:
            raise ConfigError(f"HS lookback {self.window} exceeds available "
                              f"history {r.size}")
        self.lookback_ = r[-self.window:].copy()
        self.var_path_, self.es_path_ = hs_insample(r, self.window, self.tau, self.method)
        return self

    def forecast(self):
        check_is_fitted(self, "lookback_")
        var, es, _ = hs_var_es(self.lookback_, self.tau, self.method)
        return RiskForecastPair(var, es, self.tau)


# ---------------------------------------------------------------------------
# CAViaR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaviarSpec:
    form: str
    tau: float
    exog_column: str | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise ConfigError(f"unknown CAViaR form {self.form!r}")
        if (self.exog_column is not None) != (self.form == "x"):
            raise ConfigError("exog_column must be given exactly for the x form")
        check_tau(self.tau)


@dataclass
class CaviarFit:
    form: str
    tau: float
    betas: np.ndarray
    gamma0: float
    var_path: np.ndarray
    es_path: np.ndarray
    var_next: float
    negloss: float
    converged: bool
    scale: float
    theta: np.ndarray            # optimizer coordinates on the standardized data
    start_losses: np.ndarray     # AL loss at every refined start

    @property
    def es_ratio(self):
        return 1.0 + math.exp(self.gamma0)


def _random_betas(form, n, rng):
    u = rng.uniform
    if form == "sav":
        return np.column_stack([u(-0.5, 0.5, n), u(0, 1, n), u(-1, 0, n)])
    if form == "as":
        return np.column_stack([u(-0.5, 0.5, n), u(0, 1, n), u(-1, 0, n), u(-1, 0, n)])
    if form == "ig":
        return np.column_stack([u(0, 1, n), u(0, 1, n), u(0, 2, n)])
    return np.column_stack([u(-0.5, 0.5, n), u(0, 1, n), u(-2, 0, n)])


def _beta_scale(form, s):
    """Factors converting standardized-data betas back to return units."""
    f = np.ones(N_BETA[form])
    f[0] = s * s if form == "ig" else s
    return f


def fit_caviar(window, spec, exog=None, n_random=10_000, n_refine=10, seed=0,
               warm_start=None):
    """Joint (VaR, ES) CAViaR fit by minimizing the Asymmetric-Laplace loss.

    Candidates: ``n_random`` uniform draws screened with gamma0 concentrated
    out, plus ``warm_start`` (optimizer coordinates of an earlier fit) if
    given; the best ``n_refine`` are refined by the simplex.  Data are scaled
    to unit mean square before fitting.
    """
    r = check_series(window)
    if r.size < MIN_WINDOW:
        raise ConfigError(f"CAViaR needs a window of at least {MIN_WINDOW} returns, "
                          f"got {r.size}")
    form = spec.form
    if form == "x":
        if exog is None:
            raise ConfigError("CAViaR-X requires an exogenous column")
        x = check_series(exog, name="exog")
        if x.shape != r.shape:
            raise ConfigError("exog column not aligned with returns")
    else:
        x = np.zeros_like(r)
    tau = spec.tau
    s = math.sqrt(float(np.mean(r * r)))
    if not s > 0.0:
        raise ModelOutputError("all-zero returns: degenerate CAViaR fit")
    rs = r / s
    xs = x / s
    v0 = empirical_quantile(rs[:INIT_OBS], tau)
    if not v0 < 0.0:
        v0 = -abs(v0) - 1e-3
    code = _FORM_CODE[form]
    nb = N_BETA[form]

    cands = np.empty((0, nb + 1))
    if n_random > 0:
        rng = np.random.default_rng(seed)
        betas = _random_betas(form, n_random, rng)
        loss, g0 = K.caviar_screen(code, betas, rs, xs, tau, v0)
        ok = np.isfinite(loss)
        order = np.argsort(loss[ok], kind="stable")[:n_refine]
        cands = np.column_stack([betas[ok][order], g0[ok][order]])
    if warm_start is not None:
        cands = np.vstack([np.asarray(warm_start, dtype=float)[None, :], cands])
    if len(cands) == 0:
        raise FitError(f"CAViaR-{form}: no random start yields a valid VaR path")
    data = np.vstack([rs, xs])
    res = multistart(K.CAVIAR_AL, cands, data, [code, nb], [tau, v0], step=0.1,
                     xtol=1e-7, ftol=1e-10)
    if not np.isfinite(res.fun):
        raise FitError(f"CAViaR-{form}: all starts give an infinite loss",
                       {"start_values": res.start_values})
    theta = res.x
    v = K.caviar_path(code, theta[:nb], rs, xs, v0)
    if not np.all(np.isfinite(v)):
        raise ModelOutputError(f"CAViaR-{form}: non-finite VaR path")
    ratio = 1.0 + math.exp(theta[nb])
    betas = theta[:nb] * _beta_scale(form, s)
    var_path = v[:-1] * s
    return CaviarFit(form, tau, betas, float(theta[nb]), var_path, ratio * var_path,
                     float(v[-1] * s), float(res.fun + r.size * math.log(s)),
                     res.converged, s, theta.copy(), res.start_values)


def forecast_caviar(fit, spec, last=None):
    """One-step forecast.  ``last`` = (VaR_t, r_t, x_t) applies the recursion
    once to those values; otherwise the fit's own one-step value is used."""
    if not fit.converged:
        raise FitError(f"CAViaR-{fit.form} fit did not converge")
    if last is None:
        var = fit.var_next
    else:
        v_t, r_t, x_t = last
        var = float(K.caviar_step(_FORM_CODE[fit.form], fit.betas, v_t, r_t,
                                  0.0 if x_t is None else x_t))
    if not math.isfinite(var):
        raise ModelOutputError(f"CAViaR-{fit.form}: non-finite forecast")
    return RiskForecastPair(var, fit.es_ratio * var, spec.tau)


class CAViaR(BaseEstimator):
    """CAViaR quantile recursion with ES = (1 + exp(gamma0)) * VaR.

    Parameters
    ----------
    form : {'sav', 'as', 'ig', 'x'}
    tau : float
    n_random : int
        Uniform random candidates screened before refinement.
    n_refine : int
        Best candidates refined by the simplex.
    seed : int
    """

    def __init__(self, form="sav", tau=0.025, n_random=10_000, n_refine=10, seed=0):
        self.form = form
        self.tau = tau
        self.n_random = n_random
        self.n_refine = n_refine
        self.seed = seed

    def fit(self, returns, exog=None):
        self.spec_ = CaviarSpec(self.form, self.tau, "x" if self.form == "x" else None)
        self.fit_ = fit_caviar(returns, self.spec_, exog, self.n_random, self.n_refine,
                               self.seed)
        self.var_path_ = self.fit_.var_path
        self.es_path_ = self.fit_.es_path
        return self

    def forecast(self):
        check_is_fitted(self, "fit_")
        return forecast_caviar(self.fit_, self.spec_)
