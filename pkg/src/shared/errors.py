"""
Error types shared across the deblurring engine

Every failure raised by the package derives from GenPriorError so the CLI can
map it onto an exit code without knowing which module produced it.
"""

from typing import List, Optional


class GenPriorError(Exception):
    """Base class for all package errors"""

    exit_code = 1


class DimensionError(GenPriorError):
    """Array shapes do not fit the operation"""


class ArgumentError(GenPriorError):
    """A scalar argument is outside its allowed range"""


class ConfigError(GenPriorError):
    """Invalid configuration or missing referenced file"""


class StateError(GenPriorError):
    """An object was used in a state it no longer matches (e.g. a stale tape)"""


class FormatError(GenPriorError):
    """A file could not be parsed"""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class NumericError(GenPriorError):
    """Non-finite values appeared during a computation"""

    exit_code = 2

    def __init__(self, message: str, layer: Optional[str] = None, iteration: Optional[int] = None):
        details = []
        if layer is not None:
            details.append(f"layer {layer}")
        if iteration is not None:
            details.append(f"iteration {iteration}")
        suffix = f" [{', '.join(details)}]" if details else ""
        super().__init__(f"{message}{suffix}")
        self.layer = layer
        self.iteration = iteration


class TrainingDivergedError(NumericError):
    """Training loss became non-finite; carries the trace recorded so far"""

    def __init__(self, message: str, trace: List, iteration: Optional[int] = None):
        super().__init__(message, iteration=iteration)
        self.trace = trace
