"""Exception hierarchy shared by all modules."""


class DefdomError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(DefdomError, ValueError):
    pass


class MeshError(DefdomError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class MeshValidationError(MeshError):
    pass


class GeometryError(DefdomError):
    pass


class UsageError(DefdomError, ValueError):
    pass


class DescriptorError(DefdomError):
    pass


class AssemblyError(DefdomError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ConstraintError(DefdomError):
    pass


class SolverError(DefdomError):
    def __init__(self, message, null_vector=None, blocks=None):
        super().__init__(message)
        self.null_vector = null_vector
        self.blocks = blocks or {}


class ConvergenceError(DefdomError):
    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history or [])
