"""Exception types shared across the package."""


class CascadeLabError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveParamsError(CascadeLabError, ValueError):
    """Raised when a ball weight is zero or negative."""


class NotMajorityError(CascadeLabError, ValueError):
    """Raised when the majority weight does not exceed the minority weight."""


class NearDegenerateError(CascadeLabError, ValueError):
    """Raised when a/b is too close to 1 for the rate constant to be finite."""


class DomainError(CascadeLabError, ValueError):
    """Raised when an argument falls outside an operation's stated domain."""


class ImpossibleOutcomeError(CascadeLabError):
    """Raised when a zero-probability action is fed to the ratio update.

    Observing such an action indicates a caller bug, so this is a hard
    error rather than a signed infinity.
    """


class ResourceLimitError(CascadeLabError):
    """Raised when the exact engine exceeds its configured state cap."""


class ScheduleParseError(CascadeLabError, ValueError):
    """Raised when a schedule specification string or file is malformed."""
