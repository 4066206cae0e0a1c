"""VaR and ES backtests: unconditional and conditional coverage, dynamic
quantile, and three ES regression tests, plus a per-column report."""
import logging
import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._kernels import JOINT_FZ0, es_regression_boot, es_regression_wald
from .exceptions import DataError, RiskCombError
from .optimize import multistart
from .scoring import fz0_array

logger = logging.getLogger(__name__)

TESTS = ("UC", "CC", "DQ", "BD-1", "BD-2", "BD-3")
PASS_LEVEL = 0.05
BD_MIN_N = 100


@dataclass(frozen=True)
class BacktestResult:
    test: str
    statistic: float
    pvalue: float
    n: int
    violations: int
    flags: tuple = ()

    def to_dict(self):
        return {"test": self.test, "statistic": self.statistic, "pvalue": self.pvalue,
                "n": self.n, "violations": self.violations, "flags": list(self.flags)}


def _inputs(returns, var, es=None, min_n=30):
    r = np.asarray(returns, dtype=float)
    v = np.asarray(var, dtype=float)
    if r.ndim != 1 or v.shape != r.shape:
        raise DataError("returns and VaR series must be aligned 1-d arrays")
    if r.size < min_n:
        raise DataError(f"backtest needs at least {min_n} observations, got {r.size}")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
        raise DataError("backtest inputs must be finite")
    if es is None:
        return r, v
    e = np.asarray(es, dtype=float)
    if e.shape != r.shape or not np.all(np.isfinite(e)):
        raise DataError("ES series must be finite and aligned with returns")
    return r, v, e


def _xlogy(x, y):
    return 0.0 if x == 0 else x * math.log(y)


def _uc_lr(x, n, tau):
    ll0 = _xlogy(x, tau) + _xlogy(n - x, 1.0 - tau)
    p = x / n
    ll1 = _xlogy(x, p) + _xlogy(n - x, 1.0 - p)
    return max(0.0, -2.0 * (ll0 - ll1))


def uc_test(returns, var, tau):
    """Kupiec proportion-of-failures likelihood ratio, chi-square(1)."""
    r, v = _inputs(returns, var)
    hits = r <= v
    x, n = int(hits.sum()), r.size
    lr = _uc_lr(x, n, tau)
    return BacktestResult("UC", lr, float(stats.chi2.sf(lr, 1)), n, x)


def cc_test(returns, var, tau):
    """Christoffersen conditional coverage: LR_uc + LR_ind, chi-square(2).
    With no violations or no non-violations the independence part is
    undefined; the UC result (df 1) is returned with a ``degenerate`` flag."""
    r, v = _inputs(returns, var)
    hits = (r <= v).astype(int)
    x, n = int(hits.sum()), r.size
    lr_uc = _uc_lr(x, n, tau)
    if x == 0 or x == n:
        logger.info("CC: degenerate hit sequence (%d of %d); independence skipped", x, n)
        return BacktestResult("CC", lr_uc, float(stats.chi2.sf(lr_uc, 1)), n, x,
                              ("degenerate",))
    prev, cur = hits[:-1], hits[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    pi = (n01 + n11) / (n00 + n01 + n10 + n11)
    pi0 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi1 = n11 / (n10 + n11) if n10 + n11 else 0.0
    ll0 = _xlogy(n00 + n10, 1.0 - pi) + _xlogy(n01 + n11, pi)
    ll1 = (_xlogy(n00, 1.0 - pi0) + _xlogy(n01, pi0)
           + _xlogy(n10, 1.0 - pi1) + _xlogy(n11, pi1))
    lr = lr_uc + max(0.0, -2.0 * (ll0 - ll1))
    return BacktestResult("CC", lr, float(stats.chi2.sf(lr, 2)), n, x)


def dq_test(returns, var, tau, lags=4):
    """Dynamic quantile test: demeaned hits on a constant, ``lags`` lagged
    hits and the VaR forecast; Wald statistic with chi-square(lags + 2)."""
    r, v = _inputs(returns, var, min_n=30 + lags)
    hit = (r <= v).astype(float) - tau
    n = r.size
    y = hit[lags:]
    cols = [np.ones(n - lags)]
    cols += [hit[lags - k:n - k] for k in range(1, lags + 1)]
    cols.append(v[lags:])
    X = np.column_stack(cols)
    xtx = X.T @ X
    rank = int(np.linalg.matrix_rank(xtx))
    flags = []
    if rank < X.shape[1]:
        flags.append("singular")
        logger.info("DQ: regressor matrix has rank %d of %d; using pseudo-inverse",
                    rank, X.shape[1])
    if not np.any(r <= v):
        flags.append("degenerate")
    delta = np.linalg.pinv(xtx) @ (X.T @ y)
    stat = float(delta @ xtx @ delta / (tau * (1.0 - tau)))
    return BacktestResult("DQ", stat, float(stats.chi2.sf(stat, rank)), n,
                          int(np.sum(r <= v)), tuple(flags))


def _column_rng(seed, column, variant):
    return np.random.default_rng([int(seed), zlib.crc32(str(column).encode()), variant])


def sample_es(y, tau):
    """Intercept-only FZ estimates (quantile, ES) of a sample: the
    ceil(n tau)-th order statistic and the tail mean around it."""
    y = np.asarray(y, dtype=float)
    n = y.size
    k = max(1, math.ceil(n * tau - 1e-9))
    q = float(np.partition(y, k - 1)[k - 1])
    return q, q + float(np.sum((y - q) * (y <= q))) / (n * tau)


def _counts(rng, n, n_boot):
    return rng.multinomial(n, np.full(n, 1.0 / n), size=n_boot).astype(float)


def _pseudo_response(y, q, tau):
    """FZ pseudo-observations whose mean is the ES given the quantile q."""
    return q + (y <= q) * (y - q) / tau


def _bd_intercept(e, tau, n_boot, rng):
    """Zero-ES test for e, studentized and calibrated by the bootstrap
    distribution of the recentred statistic."""
    n = e.size
    if np.all(e == 0.0):
        return 0.0, 1.0, ()
    q, es_hat = sample_es(e, tau)
    a = _pseudo_response(e, q, tau)
    var = float(np.var(a))
    if not var > 0.0:
        return (0.0, 1.0, ("degenerate",)) if es_hat == 0.0 else (math.inf, 0.0, ("degenerate",))
    stat = n * es_hat * es_hat / var
    c = _counts(rng, n, n_boot)
    m = c @ a / n
    v = c @ (a * a) / n - m * m
    with np.errstate(divide="ignore", invalid="ignore"):
        boot = n * (m - es_hat) ** 2 / v
    ok = np.isfinite(boot)
    return stat, float(np.mean(boot[ok] >= stat)), ()


def _fit_joint(r, xq, xe, tau):
    """FZ0 M-estimation of q_i = xq_i' b_q and e_i = xe_i' b_e on data
    scaled to unit mean square.  Returns (b_q, b_e, converged)."""
    kq, ke = xq.shape[1], xe.shape[1]
    data = np.vstack([r, xq.T, xe.T])
    ratio = float(np.mean(xq[:, -1]) / np.mean(xe[:, -1])) if kq == ke else 1.0
    starts = np.array([np.r_[0.0, 1.0, 0.0, 1.0],
                       np.r_[0.0, ratio, 0.0, 1.0],
                       np.r_[0.0, 0.9, 0.0, 1.1]])
    res = multistart(JOINT_FZ0, starts, data, [kq, ke], [tau], step=0.1,
                     xtol=1e-8, ftol=1e-12, maxfev=8000)
    return res.x[:kq], res.x[kq:], res.converged and np.isfinite(res.fun)


def _bd_regression(r, v, es, tau, variant, n_boot, rng):
    s = math.sqrt(float(np.mean(r * r))) or 1.0
    r, v, es = r / s, v / s, es / s
    n = r.size
    one = np.ones(n)
    xe = np.column_stack([one, es])
    xq = np.column_stack([one, v if variant == 2 else es])
    b_q, b_e, ok = _fit_joint(r, xq, xe, tau)
    a = _pseudo_response(r, xq @ b_q, tau)
    null = np.array([0.0, 1.0])
    # the ES part is re-solved with the quantile part held at its estimate
    b_e, stat, conv = es_regression_wald(b_e, xe, a, one, null, 100, 1e-10)
    ok = ok and conv and np.isfinite(stat)
    boot, w_boot, good = es_regression_boot(b_e, xe, a, _counts(rng, n, n_boot), 100, 1e-10)
    if ok and good.mean() >= 0.5:
        return max(float(stat), 0.0), float(np.mean(w_boot[good] >= stat)), ()
    if not good.any():
        logger.info("BD-%d: estimation failed", variant)
        return math.inf, 0.0, ("failed",)
    # percentile fallback, Bonferroni over the two coefficients
    logger.info("BD-%d: estimation did not converge; percentile fallback", variant)
    centered = boot[good] - b_e + null
    p_each = [2.0 * min(np.mean(centered[:, k] <= b_e[k]), np.mean(centered[:, k] >= b_e[k]))
              for k in range(2)]
    p = float(min(1.0, 2.0 * min(p_each)))
    return float(stat) if np.isfinite(stat) else float("nan"), p, ("nonconverged",)


def bd_test(returns, var, es, tau, variant, n_boot=1000, seed=0, column=""):
    """ES regression backtests.

    variant 1: r_i regressed on (1, ES_i) as the ES component of a joint
    quantile/ES regression, null (0, 1).  variant 2: same null, with
    (1, VaR_i) as the quantile component.  variant 3: e_i = r_i - ES_i,
    null of a zero intercept-only ES.  Each statistic is a Wald statistic
    with a sandwich covariance; its p-value is the share of ``n_boot``
    i.i.d. bootstrap replicates of the recentred, re-studentized statistic
    at or above the observed one.
    """
    r, v, e = _inputs(returns, var, es, min_n=BD_MIN_N)
    if variant not in (1, 2, 3):
        raise DataError(f"BD variant must be 1, 2 or 3, got {variant}")
    rng = _column_rng(seed, column, variant)
    x = int(np.sum(r <= v))
    if variant == 3:
        stat, p, flags = _bd_intercept(r - e, tau, n_boot, rng)
    elif np.any(e >= 0.0):
        stat, p, flags = math.inf, 0.0, ("nonnegative_es",)
    else:
        stat, p, flags = _bd_regression(r, v, e, tau, variant, n_boot, rng)
    return BacktestResult(f"BD-{variant}", float(stat), float(p), r.size, x, flags)


@dataclass
class ColumnReport:
    results: dict                 # test label -> BacktestResult
    avg_fz0: float
    in_mcs: bool | None = None
    mcs_pvalue: float | None = None
    error: str | None = None

    @property
    def passed(self):
        """All six backtests at or above the 5% level."""
        return (self.error is None and len(self.results) == len(TESTS)
                and all(self.results[t].pvalue >= PASS_LEVEL for t in TESTS))

    def pvalues(self):
        return {t: (self.results[t].pvalue if t in self.results else float("nan"))
                for t in TESTS}

    def to_dict(self):
        return {"pvalues": self.pvalues(), "avg_fz0": self.avg_fz0,
                "pass_all": self.passed, "in_mcs": self.in_mcs,
                "mcs_pvalue": self.mcs_pvalue, "error": self.error,
                "flags": {t: list(res.flags) for t, res in self.results.items() if res.flags}}


@dataclass
class BacktestReport:
    tau: float
    columns: dict = field(default_factory=dict)   # column -> ColumnReport
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"tau": self.tau, "meta": self.meta,
                "columns": {c: rep.to_dict() for c, rep in self.columns.items()}}

    def table_rows(self):
        """Rows shaped like the summary table: p-values, avg FZ0, flags."""
        rows = []
        for c, rep in self.columns.items():
            row = {"column": c, "tau": self.tau}
            row.update(rep.pvalues())
            row.update({"avg_fz0": rep.avg_fz0, "pass_all": int(rep.passed),
                        "in_mcs": "" if rep.in_mcs is None else int(rep.in_mcs)})
            rows.append(row)
        return rows


def run_backtests(returns, var, es, tau, dq_lags=4, n_boot=1000, seed=0, column=""):
    """All six tests for one column."""
    return {
        "UC": uc_test(returns, var, tau),
        "CC": cc_test(returns, var, tau),
        "DQ": dq_test(returns, var, tau, dq_lags),
        **{f"BD-{k}": bd_test(returns, var, es, tau, k, n_boot, seed, column)
           for k in (1, 2, 3)},
    }


def run_all_backtests(returns, var, es, tau, columns, dq_lags=4, n_boot=1000, seed=0):
    """Backtests and average FZ0 for every column of a days x columns panel.
    A failing column is recorded with its error and does not stop the rest."""
    r = np.asarray(returns, dtype=float)
    var = np.asarray(var, dtype=float)
    es = np.asarray(es, dtype=float)
    if var.ndim == 1:
        var, es = var[:, None], es[:, None]
    if var.shape != es.shape or var.shape != (r.size, len(columns)):
        raise DataError("forecast panel does not match returns and column names")
    report = BacktestReport(tau, meta={"dq_lags": dq_lags, "bd_bootstrap": n_boot,
                                       "seed": seed, "pass_level": PASS_LEVEL})
    for k, c in enumerate(columns):
        loss = fz0_array(r, var[:, k], es[:, k], tau)
        avg = float(np.mean(loss)) if np.all(np.isfinite(loss)) else float("nan")
        try:
            res = run_backtests(r, var[:, k], es[:, k], tau, dq_lags, n_boot, seed, c)
            report.columns[c] = ColumnReport(res, avg)
        except RiskCombError as exc:
            logger.warning("backtests failed for %s: %s", c, exc)
            report.columns[c] = ColumnReport({}, avg, error=str(exc))
    return report
