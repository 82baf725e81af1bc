"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class TnCondError(Exception):
    """Base class for all errors raised by ``tncond``."""


class ValidationError(TnCondError, ValueError):
    """Input failed a structural check (shapes, legs, graph invariants)."""


class DimensionError(ValidationError):
    pass


class LegNotFound(ValidationError, KeyError):
    pass


class PartitionError(ValidationError):
    pass


class NetworkInvalid(ValidationError):
    pass


class VertexNotFound(ValidationError, KeyError):
    pass


class DegenerateSite(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class NotCanonical(ValidationError):
    pass


class InvalidPerturbationBudget(ValidationError):
    pass


class TooLargeToMaterialize(TnCondError):
    """A dense intermediate would exceed the configured entry cap."""

    def __init__(self, size: int, cap: int, what: str = "tensor"):
        super().__init__(f"{what} with {size} entries exceeds materialization cap {cap}")
        self.size = size
        self.cap = cap


class ConvergenceError(TnCondError):
    """An iterative routine stopped without meeting its tolerance.

    ``best`` carries the best estimate (or iterate) found before giving up.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
