"""RiskMetrics, GARCH, GJR-GARCH and Realized GARCH variance models, paired
with a Normal, Cornish-Fisher or Student-t innovation tail."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _kernels as K
from ._validation import check_series, check_tau
from .core import RiskForecastPair
from .distributions import TailSpec, es_multiplier, quantile
from .exceptions import ConfigError, FitError, ModelOutputError
from .optimize import multistart

FAMILIES = ("riskmetrics", "garch", "gjr", "rgarch")
TAILS = ("normal", "normal_cf", "student_t")
_FAMILY_CODE = {"garch": K.FAM_GARCH, "gjr": K.FAM_GJR, "rgarch": K.FAM_RGARCH}
MIN_WINDOW = {"riskmetrics": 50, "garch": 250, "gjr": 250, "rgarch": 250}


@dataclass(frozen=True)
class VarianceModelSpec:
    family: str
    tail: str = "normal"
    realized_column: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown variance family {self.family!r}")
        if self.tail not in TAILS:
            raise ConfigError(f"unknown tail {self.tail!r}")
        if (self.realized_column is not None) != (self.family == "rgarch"):
            raise ConfigError("realized_column must be given exactly for rgarch")


@dataclass
class VarianceFit:
    family: str
    tail: str
    params: dict
    h_path: np.ndarray          # in-sample conditional variances, one per window day
    h_next: float               # one-step-ahead variance after the last window day
    residuals: np.ndarray
    loglik: float
    converged: bool
    theta: np.ndarray | None = None   # unconstrained optimizer coordinates
    extras: dict = field(default_factory=dict)

    def tail_spec(self):
        if self.tail == "student_t":
            return TailSpec("student_t", nu=self.params["nu"])
        if self.tail == "normal_cf":
            return TailSpec("normal_cf", skew=float(stats.skew(self.residuals)),
                            exkurt=float(stats.kurtosis(self.residuals)))
        return TailSpec("normal")


def _second_moment(r):
    # zero-mean convention: the sample variance is the mean square
    return float(np.mean(r * r))


def _check_window(r, family):
    if r.size < MIN_WINDOW[family]:
        raise ConfigError(f"{family} needs a window of at least {MIN_WINDOW[family]} "
                          f"returns, got {r.size}")


def _logit(p):
    return math.log(p / (1.0 - p))


def _nu_theta(nu):
    return _logit((nu - K.NU_LOW) / K.NU_SPAN)


def fit_riskmetrics(returns, tail="normal", zeta=0.94):
    """Exponential smoother with fixed decay; only the Student-t degrees of
    freedom (if requested) are estimated, by profile likelihood."""
    r = check_series(returns)
    _check_window(r, "riskmetrics")
    h0 = _second_moment(r)
    if not h0 > 0.0:
        raise ModelOutputError("all-zero returns: degenerate RiskMetrics variance")
    h = K.riskmetrics_filter(zeta, r, h0)
    params = {"zeta": zeta}
    eta = r / np.sqrt(h[:-1])
    if tail == "student_t":
        nu = _fit_nu(eta)
        params["nu"] = nu
        ll = float(np.sum(_std_t_logpdf(eta, nu) - 0.5 * np.log(h[:-1])))
    else:
        ll = float(-0.5 * np.sum(np.log(2 * np.pi) + np.log(h[:-1]) + eta**2))
    return VarianceFit("riskmetrics", tail, params, h[:-1].copy(), float(h[-1]), eta,
                       ll, True)


def _std_t_logpdf(eta, nu):
    return (math.lgamma(0.5 * (nu + 1)) - math.lgamma(0.5 * nu)
            - 0.5 * math.log((nu - 2) * math.pi)
            - 0.5 * (nu + 1) * np.log1p(eta**2 / (nu - 2)))


def _fit_nu(eta):
    res = optimize.minimize_scalar(lambda nu: -np.sum(_std_t_logpdf(eta, nu)),
                                   bounds=(K.NU_LOW, K.NU_LOW + K.NU_SPAN),
                                   method="bounded", options={"xatol": 1e-6})
    return float(res.x)


def _garch_grid(family, dist):
    starts = []
    for p in (0.90, 0.98):
        for mult in (0.5, 1.5):
            t0 = math.log((1.0 - p) * mult)
            if family == K.FAM_GARCH:
                for share in (0.05, 0.15):
                    starts.append([t0, _logit(p), _logit(share)])
            else:
                for a, g in ((0.02, 0.04), (0.05, 0.03)):
                    b = 1.0 - a - g
                    starts.append([t0, _logit(p), math.log(a / b), math.log(g / b)])
    starts = np.array(starts)
    if dist == 1:
        starts = np.column_stack([starts, np.full(len(starts), _nu_theta(8.0))])
    return starts


def _rgarch_grid(r, x, dist):
    s2 = _second_moment(r)
    delta = float(np.mean(x)) / s2
    sd_x = max(float(np.std(x)), 1e-12 * s2)
    starts = []
    for beta in (0.5, 0.7):
        for p in (0.9, 0.97):
            alpha = (p - beta) / delta
            for tau1 in (0.0, -0.1):
                starts.append([math.log(1.0 - p), _logit(beta), math.log(alpha), 0.0,
                               math.log(delta), tau1 * delta, 0.05 * delta,
                               math.log(sd_x / s2)])
    starts = np.array(starts)
    if dist == 1:
        starts = np.column_stack([starts, np.full(len(starts), _nu_theta(8.0))])
    return starts


def _fit_variance(family, r, tail, x=None, warm_start=None, grid=True):
    fam = _FAMILY_CODE[family]
    dist = 1 if tail == "student_t" else 0
    s2 = _second_moment(r)
    if not s2 > 0.0:
        raise ModelOutputError(f"all-zero returns: degenerate {family} variance")
    if fam == K.FAM_RGARCH:
        starts = _rgarch_grid(r, x, dist) if grid else np.empty((0, 8 + dist))
    else:
        starts = _garch_grid(fam, dist) if grid else np.empty((0, 3 + (fam == K.FAM_GJR) + dist))
    if warm_start is not None:
        starts = np.vstack([starts, np.asarray(warm_start, dtype=float)[None, :]])
    if len(starts) == 0:
        raise ConfigError("no start points")
    xrow = x if x is not None else np.zeros_like(r)
    data = np.vstack([r, xrow])
    res = multistart(K.VARIANCE_NLL, starts, data, [fam, dist], [s2, s2], step=0.3)
    if not np.isfinite(res.fun):
        raise FitError(f"{family} likelihood not finite at any start",
                       {"start_values": res.start_values})
    theta = res.x
    params = {}
    if fam == K.FAM_RGARCH:
        c, beta, alpha, xi, delta, tau1, tau2, su = K.rgarch_params(theta, s2)
        params.update(const=c, beta=beta, alpha=alpha, const_x=xi, delta=delta,
                      tau1=tau1, tau2=tau2, sigma_u=su)
        h = K.rgarch_filter(c, beta, alpha, x, s2)
    else:
        omega, alpha, gamma, beta = K.garch_params(fam, theta, s2)
        params.update(omega=omega, alpha=alpha, beta=beta)
        if fam == K.FAM_GJR:
            params["gamma"] = gamma
        h = K.garch_filter(omega, alpha, gamma, beta, r, s2)
    if dist == 1:
        params["nu"] = float(K.nu_from_theta(theta[-1]))
    eta = r / np.sqrt(h[:-1])
    return VarianceFit(family, tail, params, h[:-1].copy(), float(h[-1]), eta,
                       -res.fun, res.converged, theta=theta.copy())


def fit_garch(returns, tail="normal", warm_start=None, grid=True):
    r = check_series(returns)
    _check_window(r, "garch")
    return _fit_variance("garch", r, tail, warm_start=warm_start, grid=grid)


def fit_gjr(returns, tail="normal", warm_start=None, grid=True):
    r = check_series(returns)
    _check_window(r, "gjr")
    return _fit_variance("gjr", r, tail, warm_start=warm_start, grid=grid)


def fit_rgarch(returns, realized, tail="normal", warm_start=None, grid=True):
    """Linear Realized GARCH.  ``realized`` is in volatility units and is
    squared to the variance scale before fitting."""
    r = check_series(returns)
    _check_window(r, "rgarch")
    if realized is None:
        raise ConfigError("rgarch requires a realized-measure column")
    vol = check_series(realized, name="realized")
    if vol.shape != r.shape:
        raise ConfigError("realized column not aligned with returns")
    if not np.all(vol > 0.0):
        raise ConfigError("realized measure must be strictly positive")
    return _fit_variance("rgarch", r, tail, x=vol * vol, warm_start=warm_start, grid=grid)


def next_variance(family, params, h_t, r_t, realized_t=None):
    """One application of the family recursion."""
    if family == "riskmetrics":
        z = params["zeta"]
        return z * h_t + (1.0 - z) * r_t * r_t
    if family in ("garch", "gjr"):
        a = params["alpha"] + (params.get("gamma", 0.0) if r_t < 0.0 else 0.0)
        return params["omega"] + a * r_t * r_t + params["beta"] * h_t
    if family == "rgarch":
        return params["const"] + params["beta"] * h_t + params["alpha"] * realized_t**2
    raise ConfigError(f"unknown variance family {family!r}")


def fit_variance_model(spec, returns, realized=None, zeta=0.94, warm_start=None, grid=True):
    if spec.family == "riskmetrics":
        return fit_riskmetrics(returns, spec.tail, zeta)
    if spec.family == "garch":
        return fit_garch(returns, spec.tail, warm_start, grid)
    if spec.family == "gjr":
        return fit_gjr(returns, spec.tail, warm_start, grid)
    return fit_rgarch(returns, realized, spec.tail, warm_start, grid)


def forecast_var_es(fit, spec, tau, last_obs=None):
    """One-step-ahead (VaR, ES).  Without ``last_obs`` the forecast continues
    from the end of the fitted window; otherwise ``last_obs`` is
    ``(h_t, r_t, realized_t)`` and the recursion is applied once to it."""
    if not (fit.converged or fit.family == "riskmetrics"):
        raise FitError(f"{fit.family} fit did not converge", {"params": fit.params})
    if last_obs is None:
        h = fit.h_next
    else:
        h = next_variance(fit.family, fit.params, *last_obs)
    if not (math.isfinite(h) and h > 0.0):
        raise ModelOutputError(f"{fit.family}: non-finite or non-positive forecast "
                               f"variance {h}")
    tail = fit.tail_spec()
    s = math.sqrt(h)
    return RiskForecastPair(s * quantile(tail, tau), s * es_multiplier(tail, tau), tau)


def insample_var_es(fit, tau):
    tail = fit.tail_spec()
    s = np.sqrt(fit.h_path)
    return s * quantile(tail, tau), s * es_multiplier(tail, tau)


class VarianceForecaster(BaseEstimator):
    """Conditional-variance model mapped to one-step (VaR, ES) forecasts.

    Parameters
    ----------
    family : {'riskmetrics', 'garch', 'gjr', 'rgarch'}
    tail : {'normal', 'normal_cf', 'student_t'}
    tau : float
        Coverage level.
    zeta : float
        RiskMetrics decay.

    Attributes
    ----------
    fit_ : VarianceFit
    var_path_, es_path_ : ndarray
        In-sample VaR and ES implied by the fitted variances.
    """

    def __init__(self, family="garch", tail="normal", tau=0.025, zeta=0.94):
        self.family = family
        self.tail = tail
        self.tau = tau
        self.zeta = zeta

    def fit(self, returns, realized=None):
        check_tau(self.tau)
        spec = VarianceModelSpec(self.family, self.tail,
                                 "realized" if self.family == "rgarch" else None)
        self.spec_ = spec
        self.fit_ = fit_variance_model(spec, returns, realized, self.zeta)
        self.params_ = dict(self.fit_.params)
        self.var_path_, self.es_path_ = insample_var_es(self.fit_, self.tau)
        return self

    def forecast(self, tau=None):
        check_is_fitted(self, "fit_")
        return forecast_var_es(self.fit_, self.spec_, self.tau if tau is None else tau)
