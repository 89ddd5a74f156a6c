"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class FormatError(ValidationError):
    """A file does not parse as the documented on-disk format."""


class ShapeError(ValidationError):
    """Array shapes are incompatible with the requested operation."""


class UndefinedMetricError(ValidationError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
