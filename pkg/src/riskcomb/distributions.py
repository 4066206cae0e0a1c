"""Standardized quantiles and tail expectations for Normal, unit-variance
Student-t and Cornish-Fisher adjusted innovations."""
import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .core import RiskForecastPair
from .exceptions import ModelOutputError, NumericalError

logger = logging.getLogger(__name__)

KINDS = ("normal", "normal_cf", "student_t")

# levels on which the Cornish-Fisher map must be increasing
_CF_GRID = stats.norm.ppf(np.concatenate([
    np.geomspace(1e-6, 1e-2, 60), np.linspace(0.01, 0.99, 99),
    1.0 - np.geomspace(1e-2, 1e-6, 60)]))


class CornishFisherWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TailSpec:
    kind: str = "normal"
    nu: float | None = None
    skew: float = 0.0
    exkurt: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown tail kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "student_t":
            if self.nu is None or not self.nu > 2.0:
                raise ValueError(f"student_t needs nu > 2, got {self.nu}")
        if not (math.isfinite(self.skew) and math.isfinite(self.exkurt)):
            raise ValueError("skew and exkurt must be finite")


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0,1), got {tau}")


def cf_polynomial(z, skew, exkurt):
    z = np.asarray(z, dtype=float)
    return (z + (z**2 - 1.0) * skew / 6.0 + (z**3 - 3.0 * z) * exkurt / 24.0
            - (2.0 * z**3 - 5.0 * z) * skew**2 / 36.0)


def cf_is_monotone(skew, exkurt):
    deriv = (1.0 + _CF_GRID * skew / 3.0 + (3.0 * _CF_GRID**2 - 3.0) * exkurt / 24.0
             - (6.0 * _CF_GRID**2 - 5.0) * skew**2 / 36.0)
    return bool(np.all(deriv > 0.0))


def _cf_usable(spec):
    if cf_is_monotone(spec.skew, spec.exkurt):
        return True
    warnings.warn(f"Cornish-Fisher map not monotone for skew={spec.skew:.4g}, "
                  f"exkurt={spec.exkurt:.4g}; using the Gaussian tail",
                  CornishFisherWarning, stacklevel=3)
    return False


def quantile(spec, tau):
    """Standardized tau-quantile of the innovation distribution."""
    _check_tau(tau)
    z = stats.norm.ppf(tau)
    if spec.kind == "normal":
        return float(z)
    if spec.kind == "student_t":
        nu = spec.nu
        return float(stats.t.ppf(tau, nu) * math.sqrt((nu - 2.0) / nu))
    if not _cf_usable(spec):
        return float(z)
    return float(cf_polynomial(z, spec.skew, spec.exkurt))


@lru_cache(maxsize=4096)
def _cf_tail_mean(tau, skew, exkurt):
    val, err = integrate.quad(
        lambda u: cf_polynomial(special.ndtri(u), skew, exkurt), 0.0, tau,
        epsabs=0.0, epsrel=1e-8, limit=200, full_output=False)
    if not math.isfinite(val) or abs(err) > 1e-6 * max(1.0, abs(val)):
        raise NumericalError(f"Cornish-Fisher tail quadrature did not converge "
                             f"(tau={tau}, skew={skew}, exkurt={exkurt}, "
                             f"value={val}, error estimate={err})")
    return val / tau


def es_multiplier(spec, tau):
    """E[eta | eta <= quantile(spec, tau)] for unit-variance innovations."""
    _check_tau(tau)
    if spec.kind == "normal":
        return float(-stats.norm.pdf(stats.norm.ppf(tau)) / tau)
    if spec.kind == "student_t":
        nu = spec.nu
        q = stats.t.ppf(tau, nu)
        tail = -(nu + q * q) / (nu - 1.0) * stats.t.pdf(q, nu) / tau
        return float(tail * math.sqrt((nu - 2.0) / nu))
    if not _cf_usable(spec):
        return es_multiplier(TailSpec("normal"), tau)
    return float(_cf_tail_mean(float(tau), float(spec.skew), float(spec.exkurt)))


def var_es_from_variance(h, spec, tau):
    if not (h > 0.0 and math.isfinite(h)):
        raise ModelOutputError(f"conditional variance must be positive and finite, got {h}")
    s = math.sqrt(h)
    return RiskForecastPair(s * quantile(spec, tau), s * es_multiplier(spec, tau), tau)
