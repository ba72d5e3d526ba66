"""Exception types shared across the package."""


class CryoloopError(Exception):
    """Base class for all package errors."""


class DomainError(CryoloopError, ValueError):
    """An argument is outside the physical domain of an operation."""


class CircuitBlockedError(CryoloopError):
    """Every parallel path of a required branch group is closed."""


class UndefinedMixError(CryoloopError):
    """Stream mixing requested with zero total mass flow."""


class ConvergenceError(CryoloopError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message, worst_residual=None):
        super().__init__(message)
        self.worst_residual = worst_residual


class CapacityExceededError(CryoloopError):
    """Requested heat load exceeds cooler capacity at the temperature cap."""


class IntegrationFailureError(CryoloopError):
    """Transient integration produced a non-finite or negative temperature."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class UnidentifiableError(CryoloopError):
    """Passive-load decomposition system is rank deficient."""

    def __init__(self, message, unknowns=()):
        super().__init__(message)
        self.unknowns = tuple(unknowns)


class OffsetDominatedError(CryoloopError):
    """Heater-step flow estimate has a degenerate temperature response."""


class ScenarioError(CryoloopError):
    """Scenario file failed to parse or validate.

    ``location`` is a dotted path such as ``events[3].action`` when the
    problem is a specific key, or ``line N`` for parse errors.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class UnknownActionError(CryoloopError):
    """Event references a component that does not exist in the topology."""
