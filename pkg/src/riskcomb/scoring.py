"""Joint (VaR, ES) scoring functions and loss matrices."""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, ScoringError

logger = logging.getLogger(__name__)

INVALID_PENALTY = 10.0


def fz0_loss(r, pair):
    """FZ0 loss: homogeneous of degree zero in (r, VaR, ES)."""
    var, es, tau = pair.var, pair.es, pair.tau
    if not es < 0.0:
        raise ScoringError(f"FZ0 needs ES < 0, got ES={es}")
    hit = 1.0 if r <= var else 0.0
    return hit * (r - var) / (tau * es) + var / es + math.log(-es) - 1.0


def al_loss(r, pair):
    """Negative Asymmetric-Laplace log-likelihood."""
    var, es, tau = pair.var, pair.es, pair.tau
    if not es < 0.0:
        raise ScoringError(f"AL loss needs ES < 0, got ES={es}")
    hit = 1.0 if r <= var else 0.0
    return -math.log((tau - 1.0) / es) - (r - var) * (tau - hit) / (tau * es)


def fz0_array(r, var, es, tau):
    """Elementwise FZ0; entries with ES >= 0 come back as NaN."""
    r, var, es = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, var, es)))
    out = np.full(r.shape, np.nan)
    ok = es < 0.0
    hit = (r <= var) & ok
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(hit, (r - var) / (tau * es), 0.0) + var / es - 1.0
        out[ok] = val[ok] + np.log(-es[ok])
    return out


def al_array(r, var, es, tau):
    r, var, es = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, var, es)))
    out = np.full(r.shape, np.nan)
    ok = es < 0.0
    hit = (r <= var).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -(r - var) * (tau - hit) / (tau * es) - np.log(1.0 - tau)
        out[ok] = val[ok] + np.log(-es[ok])
    return out


# (G1, G2, H, a) choices of the general Fissler-Ziegel family
def _preset(name, tau):
    zero = lambda x: 0.0 * x  # noqa: E731
    g2 = lambda x: -1.0 / x  # noqa: E731
    h = lambda x: -np.log(-x)  # noqa: E731
    if name == "al":
        return zero, g2, h, lambda r: 1.0 - np.log(1.0 - tau) + 0.0 * r
    if name == "fz0":
        return zero, g2, h, zero
    raise ScoringError(f"unknown FZ preset {name!r}; expected 'al' or 'fz0'")


def general_fz_loss(r, var, es, tau, preset="fz0"):
    """Fissler-Ziegel joint score

        (I - tau) G1(VaR) - I G1(r) + G2(ES) (ES - VaR + I (VaR - r) / tau)
            - H(ES) + a(r)

    with I = 1{r <= VaR}.  The 'al' preset differs from :func:`al_loss` by
    -r / ES, a term with zero conditional mean when returns have zero mean.
    """
    g1, g2, h, a = _preset(preset, tau)
    r, var, es = (np.asarray(x, dtype=float) for x in (r, var, es))
    if np.any(es >= 0.0):
        raise ScoringError("FZ scores with G2(x) = -1/x need ES < 0")
    hit = (r <= var).astype(float)
    return ((hit - tau) * g1(var) - hit * g1(r)
            + g2(es) * (es - var + hit * (var - r) / tau) - h(es) + a(r))


def weighted_loss_series(losses, lam):
    """Exponential smoother W_i = lam L_i + (1 - lam) W_{i-1}, W_1 = L_1.
    Works column-wise on 2-d input."""
    if not 0.0 < lam < 1.0:
        raise ScoringError(f"lambda must lie in (0,1), got {lam}")
    x = np.asarray(losses, dtype=float)
    if x.shape[0] == 0:
        raise ScoringError("empty loss column")
    out = np.empty_like(x)
    out[0] = x[0]
    keep = 1.0 - lam
    for i in range(1, x.shape[0]):
        out[i] = lam * x[i] + keep * out[i - 1]
    return out


def penalize_invalid(values, models=None, dates=None):
    """Replace NaN/inf cells by the day's largest finite loss plus a fixed
    penalty so that the offending model is eliminated downstream."""
    values = np.array(values, dtype=float)
    bad = ~np.isfinite(values)
    if not bad.any():
        return values, 0
    for i in np.flatnonzero(bad.any(axis=1)):
        finite = values[i][~bad[i]]
        base = finite.max() if finite.size else 0.0
        for j in np.flatnonzero(bad[i]):
            logger.warning("invalid loss for model %s on %s; penalized",
                           models[j] if models is not None else j,
                           dates[i] if dates is not None else i)
        values[i, bad[i]] = base + INVALID_PENALTY
    return values, int(bad.sum())


@dataclass
class LossMatrix:
    dates: np.ndarray
    models: list
    values: np.ndarray
    lam: float | None = None
    n_penalized: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.models = [str(m) for m in self.models]
        if self.values.shape != (len(self.dates), len(self.models)):
            raise DataError(f"loss values shape {self.values.shape} does not match "
                            f"{len(self.dates)} dates x {len(self.models)} models")
        if not np.all(np.isfinite(self.values)):
            raise DataError("loss matrix must be finite")

    def column(self, model):
        return self.values[:, self.models.index(model)]

    def save(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", *self.models])
            for d, row in zip(self.dates, self.values):
                w.writerow([str(d), *(repr(float(v)) for v in row)])

    @classmethod
    def load(cls, path):
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            if len(header) < 2 or header[0].strip() != "date":
                raise DataError(f"{path}: expected a 'date' column followed by models")
            dates, rows = [], []
            for row_no, row in enumerate(reader, start=1):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}: row {row_no} has {len(row)} fields, "
                                    f"expected {len(header)}")
                dates.append(row[0].strip())
                try:
                    vals = [float(v) for v in row[1:]]
                except ValueError:
                    raise DataError(f"{path}: row {row_no} has an unparsable loss") from None
                if not all(math.isfinite(v) for v in vals):
                    raise DataError(f"{path}: row {row_no} has a non-finite loss")
                rows.append(vals)
        return cls(np.array(dates), [h.strip() for h in header[1:]], np.array(rows))


def build_loss_matrix(dates, models, returns, var, es, tau, kind="unweighted", lam=0.06):
    """Per-model FZ0 columns (days x models), optionally exponentially
    smoothed.  Invalid forecasts are penalized, see :func:`penalize_invalid`."""
    var = np.asarray(var, dtype=float)
    es = np.asarray(es, dtype=float)
    returns = np.asarray(returns, dtype=float)
    if var.ndim == 1:
        var, es = var[:, None], es[:, None]
    if var.shape != es.shape or var.shape[0] != returns.size:
        raise DataError("forecast panel and returns are not aligned")
    raw = fz0_array(returns[:, None], var, es, tau)
    values, n_bad = penalize_invalid(raw, models, dates)
    if kind == "weighted":
        values = weighted_loss_series(values, lam)
        return LossMatrix(dates, models, values, lam=lam, n_penalized=n_bad)
    if kind != "unweighted":
        raise ScoringError(f"unknown loss kind {kind!r}")
    return LossMatrix(dates, models, values, n_penalized=n_bad)
