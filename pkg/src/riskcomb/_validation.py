"""Input validation helpers built on scikit-learn's checkers."""
import numpy as np
from sklearn.utils import check_array, column_or_1d


def check_series(x, name="returns", min_length=1):
    x = column_or_1d(np.asarray(x, dtype=float), warn=False)
    x = check_array(x.reshape(-1, 1), ensure_all_finite=True, dtype=np.float64,
                    input_name=name, ensure_min_samples=min_length)
    return np.ascontiguousarray(x[:, 0])


def check_panel(x, name="forecasts"):
    """2-d (days x members) finite float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.ascontiguousarray(check_array(x, ensure_all_finite=True, dtype=np.float64,
                                            input_name=name))


def check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0,1), got {tau}")
    return float(tau)
