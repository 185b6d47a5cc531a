"""Exception types raised across the package."""


class FlutterBayesError(Exception):
    """Base class for all package errors."""


class InvalidParameters(FlutterBayesError, ValueError):
    pass


class DegenerateFrequencies(FlutterBayesError, ValueError):
    pass


class SingularMass(FlutterBayesError, ValueError):
    pass


class RealRoots(FlutterBayesError, ArithmeticError):
    """An eigenvalue pair of the state matrix is real (non-oscillatory mode)."""

    def __init__(self, message, airspeed=None):
        super().__init__(message)
        self.airspeed = airspeed


class NoBracket(FlutterBayesError, ValueError):
    pass


class UndefinedMargin(FlutterBayesError, ArithmeticError):
    pass


class RankDeficient(FlutterBayesError, ValueError):
    pass


class Inadmissible(FlutterBayesError, ValueError):
    """Fit coefficients violate B2 < 0, B3 > 0."""


class NoPositiveRoot(FlutterBayesError, ValueError):
    pass


class ZeroSignal(FlutterBayesError, ValueError):
    pass


class NonPositiveVariance(FlutterBayesError, ValueError):
    pass


class RejectionOverflow(FlutterBayesError, RuntimeError):
    pass


class TooFewSurvivors(FlutterBayesError, RuntimeError):
    pass


class DegenerateCovariance(FlutterBayesError, ValueError):
    pass


class DimensionMismatch(FlutterBayesError, ValueError):
    pass


class InitializationFailure(FlutterBayesError, RuntimeError):
    pass


class StuckChain(FlutterBayesError, RuntimeError):
    pass


class AllRejected(FlutterBayesError, RuntimeError):
    pass


class TooFewSamples(FlutterBayesError, ValueError):
    pass


class ConfigError(FlutterBayesError, ValueError):
    pass


class MissingArtifacts(FlutterBayesError, FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing artifacts: " + ", ".join(self.missing))
