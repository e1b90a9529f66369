"""Exception hierarchy shared by all modules."""


class RDODEError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(RDODEError, ValueError):
    pass


class ResonanceError(RDODEError):
    """The shift ``b`` sits on (or too close to) ``gamma * mu_k``."""

    def __init__(self, message, mode=None, eigenvalue=None, gap=None):
        super().__init__(message)
        self.mode = mode
        self.eigenvalue = eigenvalue
        self.gap = gap


class SingularMatrixError(RDODEError):
    pass


class NoRootFoundError(RDODEError):
    pass


class NonConvergenceError(RDODEError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class BranchDomainError(RDODEError):
    """The final ``V`` left the interval on which a branch is defined."""

    def __init__(self, message, cells=0):
        super().__init__(message)
        self.cells = cells


class ResidualError(RDODEError):
    pass


class NumericError(RDODEError):
    pass


class NotApplicableError(RDODEError):
    pass


class SizeError(RDODEError):
    pass


class BlowUpError(RDODEError):
    def __init__(self, message, cell=None, time=None, trace=None):
        super().__init__(message)
        self.cell = cell
        self.time = time
        self.trace = trace


class InsufficientDataError(RDODEError):
    pass


class SchemaError(RDODEError):
    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path and not message.startswith(path) else message)
        self.path = path
