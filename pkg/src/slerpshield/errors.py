"""Exception types raised across the library."""


class SlerpShieldError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(SlerpShieldError):
    """Two vectors that must share a length do not."""


class LayoutMismatch(SlerpShieldError):
    """Two templates that must share a group layout do not."""


class ZeroGroup(SlerpShieldError):
    """A group slice has (near-)zero norm and cannot be normalized."""


class DegenerateAngle(SlerpShieldError):
    """Template and key are parallel or antipodal; the rotation plane is undefined.

    Carries the offending group index when raised group-wise.
    """

    def __init__(self, message: str, group_index: int | None = None):
        super().__init__(message)
        self.group_index = group_index


class BudgetTooLarge(SlerpShieldError):
    """A per-group dropout count would leave no coordinate kept."""


class InfeasibleBudget(SlerpShieldError):
    """A total dropout budget exceeds what all groups together can absorb."""


class EmptyStore(SlerpShieldError):
    """Identification was attempted against an empty record list."""


class CalibrationFailure(SlerpShieldError):
    """Population noise calibration could not reach the target angle."""


class InsufficientPairs(SlerpShieldError):
    """Too few mated or non-mated pairs for a stable linkability estimate."""


class StoreFormatError(SlerpShieldError):
    """A store file is malformed or inconsistent with its header."""
