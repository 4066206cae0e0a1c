"""Exception hierarchy.  Each class carries a short machine-readable code that
the command line surfaces on failure."""


class RiskCombError(Exception):
    code = "ERROR"


class ConfigError(RiskCombError, ValueError):
    code = "CONFIG"


class DataError(RiskCombError, ValueError):
    code = "DATA"


class ModelOutputError(RiskCombError, ArithmeticError):
    """A model produced a non-finite or degenerate quantity."""

    code = "MODEL_OUTPUT"


class FitError(RiskCombError, RuntimeError):
    """Optimization failed; ``diagnostics`` holds the best point found."""

    code = "FIT"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ScoringError(RiskCombError, ValueError):
    code = "SCORING"


class CombinationError(RiskCombError, ValueError):
    code = "COMBINATION"


class NumericalError(RiskCombError, ArithmeticError):
    code = "NUMERICAL"
