"""Exception hierarchy shared by all modules."""


class Do3dError(Exception):
    """Base class for every error raised by this package."""


class ContractError(Do3dError, ValueError):
    """Inputs violate a structural precondition (shapes, ids, dimensions)."""


class DomainError(Do3dError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class BehindCameraError(DomainError):
    """A point is on or behind the camera plane and cannot be projected."""


class DegenerateInputError(Do3dError, ValueError):
    """Reduction over an empty set (empty mask, no valid pixel, ...)."""


class FormatError(Do3dError, ValueError):
    """Malformed PFM/PPM payload.

    ``offset`` is the byte offset at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SpecError(Do3dError, ValueError):
    """Invalid scene specification; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class DivergenceError(Do3dError, RuntimeError):
    """Optimization produced a non-finite loss."""

    def __init__(self, stage, iteration, message="loss became non-finite"):
        super().__init__(f"stage {stage}, iteration {iteration}: {message}")
        self.stage = stage
        self.iteration = iteration
