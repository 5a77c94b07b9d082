"""Exception types shared across the toolkit."""


class FlexNeedleError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(FlexNeedleError):
    """Invalid configuration or scenario input."""


class SolverError(FlexNeedleError):
    """Equilibrium solve failed to converge.

    Carries the last residual norm so callers can decide whether to
    retry, penalize the rollout, or abort.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PlanningError(FlexNeedleError):
    """Cross-entropy planning produced no usable trajectory."""


class TrackerError(FlexNeedleError):
    """All tracking rollouts failed for the current window."""


class FeedbackError(FlexNeedleError):
    """Sensor measurement rejected or feedback re-solve failed."""
