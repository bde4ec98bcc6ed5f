"""Exception types shared across the toolkit."""


class WsdoError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(WsdoError):
    """A domain object violates one of its invariants."""


class CapacityError(WsdoError):
    """More products than available slots."""


class DiscretizationError(WsdoError):
    """Grid cell size too coarse for the narrowest aisle."""


class IsolationError(WsdoError):
    """A slot has no adjacent walkable cell."""


class UnreachableError(WsdoError):
    """No path exists between the requested nodes."""

    def __init__(self, message, slots=None):
        super().__init__(message)
        self.slots = list(slots) if slots else []


class InfeasibleError(WsdoError):
    """A feasible solution does not exist for the given parameters."""


class InfeasibleParallelismError(InfeasibleError):
    """Every cart is wider than the narrowest aisle (parallelism = 0)."""


class DegenerateLabelsError(WsdoError):
    """Classifier training requires at least two categories."""


class ConfigurationError(WsdoError):
    """An active-set or runtime configuration is incomplete."""


class FramingError(WsdoError):
    """Wire-level length prefix violates the framing contract."""


class ProtocolError(WsdoError):
    """A well-framed message violates the protocol contract."""
