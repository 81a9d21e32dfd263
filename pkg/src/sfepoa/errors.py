"""Exception hierarchy shared by every module."""


class SfepoaError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SfepoaError, ValueError):
    """Malformed case file or JSON document."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedCostError(ParseError):
    pass


class InvalidLineError(ParseError):
    pass


class NetworkError(SfepoaError, ValueError):
    """Structural problem with a network (disconnected, parallel lines, ...)."""


class ValidationError(SfepoaError, ValueError):
    """A market violates one of the modelling assumptions.

    ``failures`` holds the failed checks of the validation report.
    """

    def __init__(self, message, failures=()):
        self.failures = tuple(failures)
        super().__init__(message)


class PowerFlowError(SfepoaError, ValueError):
    pass


class UnsupportedTopologyError(SfepoaError, ValueError):
    """Operation restricted to weakly-cyclic networks got something else."""


class SolverError(SfepoaError, RuntimeError):
    """The dispatch solver failed; ``residual`` is the best residual reached."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class InfeasibleError(SolverError):
    pass


class CertificationError(SfepoaError, RuntimeError):
    """A numerical certificate (e.g. the tightness gap) could not be reached."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)
