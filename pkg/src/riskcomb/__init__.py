"""Joint VaR/ES forecasting, forecast combination with Model Confidence Set
member selection, and backtesting."""
from .backtest import (BacktestReport, BacktestResult, ColumnReport, bd_test, cc_test, dq_test,
                       run_all_backtests, uc_test)
from .combine import (PREDICTORS, CombinationWeights, MCSCombiner, RiskCombiner,
                      build_mcs_predictors, combine_arrays, ew_combine, fit_ms_weights,
                      fit_rs_weights, median_combine, rs_weights)
from .core import (ReturnSeries, RiskForecastPair, WindowPlan, compute_log_returns, load_series,
                   make_window_plan, save_series)
from .distributions import TailSpec, es_multiplier, quantile, var_es_from_variance
from .exceptions import (CombinationError, ConfigError, DataError, FitError, ModelOutputError,
                         NumericalError, RiskCombError, ScoringError)
from .mcs import ModelConfidenceSet, SuperiorSet, run_mcs, stationary_bootstrap
from .parametric import (VarianceFit, VarianceForecaster, VarianceModelSpec, fit_garch, fit_gjr,
                         fit_rgarch, fit_riskmetrics, fit_variance_model, forecast_var_es)
from .pipeline import (ForecastStore, GarchSimSpec, RunConfig, evaluate, run_rolling, simulate)
from .quantile import (CAViaR, CaviarSpec, HistoricalSimulation, HsSpec, fit_caviar,
                       forecast_caviar, hs_var_es)
from .scoring import (LossMatrix, al_loss, build_loss_matrix, fz0_loss, general_fz_loss,
                      weighted_loss_series)

__version__ = "0.1.0"
