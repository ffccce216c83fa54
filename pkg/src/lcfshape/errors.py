"""Exception hierarchy shared by all modules."""


class LcfError(Exception):
    """Base class for every error raised by lcfshape."""


class SolverError(LcfError):
    """A scalar root finder failed to converge.

    ``bracket`` holds the last (lo, hi) interval known to contain the root.
    """

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class ConstraintError(LcfError):
    """A design violates (or cannot be projected onto) the admissible set."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MeshingError(LcfError):
    pass


class AssemblyError(LcfError):
    pass


class ConvergenceError(LcfError):
    """Iterative linear solve hit its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigError(LcfError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
