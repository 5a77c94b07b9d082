"""Planar flexible-needle insertion toolkit.

Quasi-static FE needle/tissue simulation, cross-entropy trajectory
planning and MPC tracking, a kinematic bang-bang bevel controller, a
simulated EM position sensor, and a closed-loop campaign harness.
"""

from . import bangbang, ce, em, harness, io, ogden, planner, scenario, sim, tracker
from .errors import (
    ConfigurationError,
    FeedbackError,
    FlexNeedleError,
    PlanningError,
    SolverError,
    TrackerError,
)

__version__ = "0.1.0"

__all__ = [
    "bangbang", "ce", "em", "harness", "io", "ogden", "planner",
    "scenario", "sim", "tracker",
    "FlexNeedleError", "ConfigurationError", "SolverError",
    "PlanningError", "TrackerError", "FeedbackError",
    "__version__",
]
