"""Exception hierarchy shared by every package."""


class MimicError(Exception):
    """Base class for all errors raised by this project"""


class DimensionError(MimicError, ValueError):
    """Shapes, widths or frame counts do not line up"""


class ConfigurationError(MimicError, ValueError):
    """A hyperparameter combination is invalid"""


class StageError(MimicError, RuntimeError):
    """A prerequisite pipeline artifact is missing"""

    def __init__(self, stage: str, detail: str):
        super().__init__(f"missing prerequisite stage '{stage}': {detail}")
        self.stage = stage


class ArchiveError(MimicError, ValueError):
    """An archive file is corrupt, truncated or of an unknown version"""


class NumericalError(MimicError, ArithmeticError):
    """A forward value, loss or ODE state became non-finite"""
