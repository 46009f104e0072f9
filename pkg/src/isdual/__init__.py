"""Stochastic optimisation over polytopes with jointly adapted importance sampling."""

from .errors import ConfigError, DomainError, InfeasibleError, NonFiniteGradientError
from .is_families import ExponentialTilting, FiniteSupport, MeanTranslation, Mixture, StandardNormal, SymmetricExponential
from .linalg import Polytope, active_set, dual_average_step, projector_onto_nullspace, pseudoinverse
from .problems import (
    constrained_quadratic_problem,
    exponential_quantile_problem,
    finite_support_quantile_problem,
    normal_quantile_problem,
)
from .solver import ENGINES, JointState, StepSchedule, TrajectoryRecord, run

__version__ = "0.1.0"
