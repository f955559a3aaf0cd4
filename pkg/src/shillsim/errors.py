"""Exception types raised across the package."""


class ShillSimError(Exception):
    """Base class for all package errors."""


class EpisodeInvalid(ShillSimError, ValueError):
    """An episode or one of its parts violates a type invariant.

    ``invariant`` names the first violated rule.
    """

    invariant = "episode"

    def __init__(self, message: str = "", invariant: str | None = None):
        super().__init__(message or self.invariant)
        if invariant is not None:
            self.invariant = invariant


class NonPositivePrice(EpisodeInvalid):
    invariant = "positive_price"


class UnorderedTimestamps(EpisodeInvalid):
    invariant = "ordered_timestamps"


class LabelInconsistency(EpisodeInvalid):
    invariant = "thread_label"


class EmptyBank(ShillSimError, ValueError):
    pass


class DimensionMismatch(ShillSimError, ValueError):
    pass


class LengthMismatch(ShillSimError, ValueError):
    pass


class EmptyBatch(ShillSimError, ValueError):
    pass


class GroupTooSmall(ShillSimError, ValueError):
    pass


class DegenerateDenominator(ShillSimError, ZeroDivisionError):
    pass


class DomainError(ShillSimError, ValueError):
    pass


class SingleClass(ShillSimError, ValueError):
    pass


class SeriesTooShort(ShillSimError, ValueError):
    pass


class SingularRegression(ShillSimError, ArithmeticError):
    pass


class ConfigError(ShillSimError, ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SchemaMismatch(ShillSimError, ValueError):
    pass
