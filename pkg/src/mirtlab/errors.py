"""Exception hierarchy shared across the package."""


class MirtError(Exception):
    """Base class for all package errors."""


class DimensionError(MirtError, ValueError):
    """Ability and item dimensions disagree."""


class DegenerateModelError(MirtError, ValueError):
    """A model or matrix is degenerate (zero discrimination, singular matrix, ...)."""


class LikelihoodDomainError(MirtError, ValueError):
    """A log-likelihood term is -inf (probability 0 or 1 against the observed response)."""

    def __init__(self, message, student=None, item=None):
        super().__init__(message)
        self.student = student
        self.item = item


class DataFormatError(MirtError, ValueError):
    """Malformed input file."""


class SurfaceError(MirtError, ValueError):
    """A response surface returned a non-finite value or failed a geometric check."""


class HyperplaneVerificationError(SurfaceError):
    """The surface is not constant on the estimated hyperplane."""

    def __init__(self, message, worst_deviation, normal=None):
        super().__init__(message)
        self.worst_deviation = worst_deviation
        self.normal = normal


class ExistenceError(MirtError):
    """Rows or columns of the response matrix admit no finite maximum likelihood estimate."""

    def __init__(self, message, rows=(), columns=()):
        super().__init__(message)
        self.rows = list(rows)
        self.columns = list(columns)


class ConvergenceError(MirtError):
    """An iterative procedure failed to converge."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
