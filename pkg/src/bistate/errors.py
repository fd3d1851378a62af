"""Exception types shared across the package."""


class BistateError(Exception):
    """Base class for all package errors."""


class DomainError(BistateError, ValueError):
    """An input lies outside the region where a model or approximation is valid."""


class NotFoundError(BistateError):
    """A requested root or feature does not exist in the searched interval."""


class FitError(BistateError):
    """Least-squares fit failed.

    Attributes
    ----------
    best : object
        Best iterate reached before giving up (may be ``None``).
    residual_norm : float
        Residual norm at ``best``.
    """

    def __init__(self, message, best=None, residual_norm=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual_norm = residual_norm


class InstabilityError(BistateError):
    """Static equilibrium lost (jump to contact).

    ``last_stable_force`` is the last control force at which a stable
    equilibrium was found, or ``None`` if no stable point was reached.
    """

    def __init__(self, message, last_stable_force=None):
        super().__init__(message)
        self.last_stable_force = last_stable_force


class DivergenceError(BistateError):
    """Integrator state became non-finite."""

    def __init__(self, message, last_finite_time=None):
        super().__init__(message)
        self.last_finite_time = last_finite_time
