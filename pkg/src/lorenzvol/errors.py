"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ContractError and DomainError -> 2,
ResourceError and TrappingError -> 3, NumericError -> 4.
"""


class LorenzVolError(Exception):
    """Base class for every error raised by the package."""


class ContractError(LorenzVolError, ValueError):
    """A parameter record or call violates a stated precondition."""


class DomainError(LorenzVolError, ValueError):
    """A point lies outside the chart of its model."""


class NumericError(LorenzVolError, ArithmeticError):
    """A non-finite value appeared during evaluation."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ResourceError(LorenzVolError, MemoryError):
    """The requested computation would exceed a configured cap."""


class NoSuchBranchError(ContractError):
    """An itinerary cannot be followed by inverse branches."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class TrappingError(ContractError):
    """A region that should be trapping lets a sampled orbit escape."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class InsufficientDataError(LorenzVolError, RuntimeError):
    """Every sampled segment was discarded."""
