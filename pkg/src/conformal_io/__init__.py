"""Conformal inverse optimization.

Fit a cost vector to observed decisions, calibrate a cone of cost vectors
around it on held-out decisions, and prescribe robust decisions over that
cone.
"""

__version__ = "0.1.0"

from .calibration import CalibrationResult, calibrate, conformity_score
from .core import (ConeUncertaintySet, DecisionDataset, ForwardInstance, Observation, ProblemKind,
                   Sense)
from .estimation import PointEstimate, fit_suboptimality
from .evaluation import GroundTruthConfig, estimate_gaps, empirical_coverage, gap_bounds, generate_synthetic
from .forward import forward_oracle, solve_forward
from .kernel import ball_constrained_lp_max, spherical_cap_support
from .robust import RobustSolution, solve_rfo
from .simplex import LinearProgram, simplex_solve

__all__ = [
    "CalibrationResult", "ConeUncertaintySet", "DecisionDataset", "ForwardInstance", "GroundTruthConfig",
    "LinearProgram", "Observation", "PointEstimate", "ProblemKind", "RobustSolution", "Sense",
    "ball_constrained_lp_max", "calibrate", "conformity_score", "empirical_coverage", "estimate_gaps",
    "fit_suboptimality", "forward_oracle", "gap_bounds", "generate_synthetic", "simplex_solve",
    "solve_forward", "solve_rfo", "spherical_cap_support",
]
