"""Exception hierarchy shared by all modules."""


class Cell2MacroError(Exception):
    """Base class for every error raised by the package."""


class InvalidShape(Cell2MacroError):
    pass


class MeshFailure(Cell2MacroError):
    pass


class ResolutionError(Cell2MacroError):
    pass


class MeshMismatch(Cell2MacroError):
    pass


class InvalidParams(Cell2MacroError):
    pass


class RankDeficiency(Cell2MacroError):
    pass


class SingularSystem(Cell2MacroError):
    pass


class NonConvergence(Cell2MacroError):
    pass


class Unsupported(Cell2MacroError):
    pass


class SolvabilityViolation(Cell2MacroError):
    pass


class IncompatibleData(Cell2MacroError):
    pass


class FlatData(Cell2MacroError):
    pass


class ConfigError(Cell2MacroError):
    pass
