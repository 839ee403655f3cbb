class PHMMError(Exception):
    """Base class for every error raised by phmmutils"""


class InvalidParameterError(PHMMError, ValueError):
    pass


class InvalidLabelError(PHMMError, ValueError):
    pass


class ShapeError(PHMMError, ValueError):
    pass


class DegenerateSchemeError(PHMMError, ValueError):
    pass


class ConstraintViolationError(PHMMError, ValueError):
    pass


class IdentifiabilityError(PHMMError, ValueError):
    pass


class CannotSplitError(PHMMError, ValueError):
    pass


class UndefinedMetricError(PHMMError, ValueError):
    pass


class DegenerateDiveError(PHMMError, ValueError):
    pass


class CannotCalibrateError(PHMMError, ValueError):
    pass


class ScenarioSizeError(PHMMError, ValueError):
    pass


class ChannelMissingError(PHMMError, KeyError):
    def __str__(self):
        # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ZeroLikelihoodError(PHMMError, RuntimeError):
    """Raised when every hidden path of a series has probability zero

    Attributes:
        series_id (str): identifier of the offending series, if known
    """

    def __init__(self, message, series_id=None):
        super().__init__(message)
        self.series_id = series_id


class FitFailureError(PHMMError, RuntimeError):
    """Raised when no restart of a fit produced a usable optimum

    Attributes:
        restarts (list): per-restart diagnostics
        fold (str): fold identifier when raised inside cross validation
    """

    def __init__(self, message, restarts=None, fold=None):
        super().__init__(message)
        self.restarts = restarts or []
        self.fold = fold
