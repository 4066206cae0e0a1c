"""Return series, forecast pairs, file ingestion and rolling-window bookkeeping."""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .exceptions import ConfigError, DataError

EXOG_COLUMNS = ("rvol5", "rbss", "rk")
DEFAULT_SCHEMA = {"date": "date", "ret": "ret", "rvol5": "rvol5", "rbss": "rbss",
                  "rk": "rk"}


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ReturnSeries:
    """Daily log-returns on strictly increasing calendar dates, with optional
    realized-measure columns aligned to the same dates."""

    dates: np.ndarray
    returns: np.ndarray
    exog: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        dates = _frozen(self.dates, "datetime64[D]")
        returns = _frozen(self.returns)
        if returns.ndim != 1 or dates.shape != returns.shape:
            raise DataError("dates and returns must be 1-d and of equal length")
        if dates.size > 1 and not np.all(np.diff(dates) > np.timedelta64(0, "D")):
            raise DataError("dates must be strictly increasing without duplicates")
        if not np.all(np.isfinite(returns)):
            bad = int(np.flatnonzero(~np.isfinite(returns))[0])
            raise DataError(f"non-finite return at row {bad}")
        exog = {}
        for name, col in self.exog.items():
            col = _frozen(col)
            if col.shape != returns.shape:
                raise DataError(f"exog column {name!r} has length {col.size}, "
                                f"expected {returns.size}")
            if not np.all(np.isfinite(col)):
                bad = int(np.flatnonzero(~np.isfinite(col))[0])
                raise DataError(f"non-finite value in column {name!r} at row {bad}")
            exog[name] = col
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "exog", exog)

    def __len__(self):
        return self.returns.size

    def slice(self, start, stop):
        return ReturnSeries(self.dates[start:stop], self.returns[start:stop],
                            {k: v[start:stop] for k, v in self.exog.items()})


@dataclass(frozen=True)
class RiskForecastPair:
    var: float
    es: float
    tau: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0,1), got {self.tau}")

    @property
    def flags(self):
        """Data-quality flags; misspecified models may legitimately emit these."""
        out = []
        if self.es > self.var:
            out.append("es_above_var")
        if self.var >= 0.0:
            out.append("nonnegative_var")
        return tuple(out)

    def scale(self, c):
        return RiskForecastPair(c * self.var, c * self.es, self.tau)


@dataclass(frozen=True)
class WindowPlan:
    """Rolling plan; windows and targets use 1-based day indices."""

    t_in: int
    nstep: int

    @property
    def j_range(self):
        return range(self.nstep)

    def window(self, j):
        return 1 + j, self.t_in + j

    def target(self, j):
        return self.t_in + j + 1


def make_window_plan(n, t_in):
    if t_in < 2:
        raise ConfigError(f"t_in must be at least 2, got {t_in}")
    if n <= t_in:
        raise ConfigError(f"series length {n} leaves no out-of-sample days for "
                          f"t_in={t_in}")
    return WindowPlan(t_in=int(t_in), nstep=int(n - t_in))


def compute_log_returns(prices, dates=None):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1 or prices.size < 2:
        raise DataError("need at least two prices")
    bad = np.flatnonzero(~(prices > 0.0))
    if bad.size:
        raise DataError(f"non-positive price at row {int(bad[0])}")
    returns = np.diff(np.log(prices))
    if dates is None:
        dates = np.datetime64("2000-01-01") + np.arange(returns.size)
    else:
        dates = np.asarray(dates, dtype="datetime64[D]")[1:]
    return ReturnSeries(dates, returns)


def _parse_float(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"row {row}, column {column!r}: unparsable value {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column!r}: non-finite value {text!r}")
    return value


def load_series(path, schema=None):
    """Read a delimited file into a date-sorted :class:`ReturnSeries`.

    ``schema`` maps canonical names (``date``, ``ret``, ``price``, ``rvol5``,
    ``rbss``, ``rk``) to file column names.  Rows are numbered from 1 after the
    header.  When both returns and prices are mapped, returns win.
    """
    mapping = dict(DEFAULT_SCHEMA)
    if schema:
        mapping.update(schema)
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    index = {name: i for i, name in enumerate(header)}
    if mapping["date"] not in index:
        raise DataError(f"{path}: missing column {mapping['date']!r}")
    has_ret = mapping.get("ret") in index
    has_price = mapping.get("price") in index
    if not (has_ret or has_price):
        raise DataError(f"{path}: missing column {mapping['ret']!r}")
    exog_names = [k for k in EXOG_COLUMNS if mapping.get(k) in index]

    dates, values, exog = [], [], {k: [] for k in exog_names}
    value_col = mapping["ret"] if has_ret else mapping["price"]
    for row_no, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
        text = row[index[mapping["date"]]].strip()
        try:
            dates.append(np.datetime64(text, "D"))
        except ValueError:
            raise DataError(f"row {row_no}, column {mapping['date']!r}: "
                            f"unparsable date {text!r}") from None
        values.append(_parse_float(row[index[value_col]].strip(), row_no, value_col))
        for k in exog_names:
            exog[k].append(_parse_float(row[index[mapping[k]]].strip(), row_no,
                                        mapping[k]))
    if not dates:
        raise DataError(f"{path}: no data rows")
    dates = np.array(dates, dtype="datetime64[D]")
    order = np.argsort(dates, kind="stable")
    dates = dates[order]
    values = np.array(values)[order]
    exog = {k: np.array(v)[order] for k, v in exog.items()}
    if dates.size > 1 and np.any(np.diff(dates) == np.timedelta64(0, "D")):
        dup = dates[1:][np.diff(dates) == np.timedelta64(0, "D")][0]
        raise DataError(f"{path}: duplicate date {dup}")
    if has_ret:
        return ReturnSeries(dates, values, exog)
    derived = compute_log_returns(values, dates)
    return ReturnSeries(derived.dates, derived.returns,
                        {k: v[1:] for k, v in exog.items()})


def save_series(series, path):
    """Write a series so that :func:`load_series` restores it bit for bit."""
    names = list(series.exog)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "ret", *names])
        for i in range(len(series)):
            w.writerow([str(series.dates[i]), repr(float(series.returns[i])),
                        *(repr(float(series.exog[k][i])) for k in names)])
