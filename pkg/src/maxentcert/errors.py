"""Exception hierarchy shared by every module."""


class MaxentError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(MaxentError, ValueError):
    pass


class NonFiniteInput(MaxentError, ValueError):
    pass


class ProblemError(MaxentError, ValueError):
    """A moment problem (or one of its parts) failed admission."""


class DeclarationInconsistent(MaxentError):
    """Sampling found a point contradicting a declared structural attribute."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DivergentIntegral(MaxentError):
    """Tail mass did not shrink as the truncation radius grew."""


class DivergentPartition(DivergentIntegral):
    """The partition function exp(-sum lambda*phi) is not integrable over S."""


class NotConverged(MaxentError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class AcceptanceRateCollapse(MaxentError):
    pass


class InfeasibleDiscretization(MaxentError):
    pass


class ConfigError(MaxentError, ValueError):
    """Invalid configuration; ``path`` locates the offending field."""

    def __init__(self, path, message, line=None):
        self.path = path
        self.line = line
        where = path if line is None else f"{path} (line {line})"
        super().__init__(f"{where}: {message}")


class NoExistenceRoute(MaxentError):
    """Neither the finite-volume nor the stabilizing-constraint route applies."""

    def __init__(self, message, diagnosis=None):
        super().__init__(message)
        self.diagnosis = diagnosis
