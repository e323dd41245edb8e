"""Exception hierarchy shared by the estimators and the experiment runner."""


class SdisError(Exception):
    """Base class for all estimator errors."""


class DimensionError(SdisError, ValueError):
    """Input vector length does not match the model dimension."""


class UnsafeOrigin(SdisError):
    """G(0) <= 0: directional methods require a safe origin."""


class NoRootFound(SdisError):
    """No sign change of G along a direction up to the search radius."""


class BudgetExceeded(SdisError):
    """The initial Monte Carlo stage exhausted its sample cap."""


class MaxLevelsExceeded(SdisError):
    """The magnification factor did not reach 1 within the level cap."""


class AllWeightsZero(SdisError):
    """Every importance weight of a level vanished."""
