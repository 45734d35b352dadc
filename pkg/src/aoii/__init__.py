"""Optimal transmission policies for the Age of Incorrect Information under an update-rate budget."""
from .applications import error_f, fire_f, linear_f, make_penalty, time_threshold_f, video_f, weibull_f
from .closed_form import (
    H_margin,
    average_penalty,
    evaluate_randomized,
    stationary_distribution,
    tail_sum,
    theta_n,
    update_rate,
    value_function,
)
from .errors import (
    AdmissibilityViolation,
    AoIIError,
    ConfigError,
    DivergenceSuspected,
    InfeasibleTolerance,
    NoConvergence,
    NumericalError,
    ParamError,
    RangeError,
    SearchOverflow,
)
from .model import Action, PenaltySpec, SourceChannelParams, transition_distribution, validate
from .optimizer import LagrangeSolution, MixturePolicy, error_optimal, find_threshold, solve
from .rvia import RviaResult, check_monotone, check_threshold_structure, rvia
from .simulator import Policy, SimStats, aoi_baseline, simulate

__version__ = "0.1.0"
