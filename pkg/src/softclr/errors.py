"""Error types shared across the package."""


class InvalidDistributionError(ValueError):
    """A vector that must be a probability distribution is not one."""


class InvalidLabelError(ValueError):
    """A pseudo-label vector violates its contract (negative mass, bad sum)."""


class EmptyBankError(ValueError):
    """An operation needs at least one memory-bank entry."""


class InvalidStateError(RuntimeError):
    """An object is used out of order (e.g. backward without a forward cache)."""
