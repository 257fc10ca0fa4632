"""Exception hierarchy for l0lab.

Every numerical failure raised by the library derives from :class:`L0LabError`
so callers (and the CLI) can catch one type and report the concrete class name.
"""


class L0LabError(Exception):
    """Base class for all library errors."""


# numerics
class NonConvergent(L0LabError):
    pass


class NonFinite(L0LabError, ValueError):
    pass


class InsufficientTailRadius(L0LabError, ValueError):
    pass


class NonMonotoneCDF(L0LabError):
    pass


# noise
class OddDegree(L0LabError, ValueError):
    pass


class NonNegativeLeadingCoefficient(L0LabError, ValueError):
    pass


class NormalizationFailure(L0LabError):
    pass


class UnsupportedOrder(L0LabError, ValueError):
    pass


class BelowValidityRadius(L0LabError, ValueError):
    pass


# classify / attack
class BudgetTooLarge(L0LabError, ValueError):
    """Raised when 2k >= d, so no coordinates would survive truncation."""


class ExtremeSearchFailed(L0LabError):
    pass


class InstanceTooLarge(L0LabError, ValueError):
    pass
