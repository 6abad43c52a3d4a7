"""Exception hierarchy shared by every fairsplit module."""


class FairsplitError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class ValidationError(FairsplitError, ValueError):
    """Input file or record does not satisfy its declared schema."""


class ShapeMismatchError(ValidationError):
    pass


class DomainError(FairsplitError, ValueError):
    """A scalar argument lies outside the operation's domain."""


class InfeasibleError(FairsplitError):
    pass


class UndefinedMetricError(FairsplitError, ValueError):
    """The metric has no value on this input (e.g. fewer than two subgroups)."""
