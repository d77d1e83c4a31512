"""Exception hierarchy. The CLI maps these onto exit codes."""


class FeatboundsError(Exception):
    """Base class for every error raised on purpose by this package."""


class ValidationError(FeatboundsError, ValueError):
    """Bad argument, config value, or precondition violation (exit code 1)."""


class FormatError(FeatboundsError, ValueError):
    """A file exists but its contents cannot be parsed (exit code 2)."""


class ProjectionError(FeatboundsError, ArithmeticError):
    """A point maps to infinity under a homography."""


class EmptyReferenceError(FeatboundsError):
    """No reference keypoints fall inside the common region; repeatability is undefined."""


class MismatchError(ValidationError):
    """Two inputs that must line up (scenes, amounts) do not."""


class InvariantError(FeatboundsError, AssertionError):
    """An internal consistency check failed (exit code 3)."""
