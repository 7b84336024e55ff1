"""Zeroth-order stochastic bilevel optimization."""

from .core import (
    ConfigError,
    DivergenceError,
    InvalidDimensionError,
    InvalidParameterError,
    NumericError,
    Point,
    ProblemConstants,
    QueryCounter,
    RngStream,
    SmoothingParams,
    UnsupportedOperationError,
    derive_stream,
    sample_gaussian,
)
from .hessinv import HessInvConfig, approx_hess_inv_vec, hessinv_schedule
from .oracle import FunctionOracle, StochasticScalarOracle
from .problems import (
    BilevelProblem,
    HyperRepSpec,
    QuadraticBilevelSpec,
    make_hyper_rep,
    make_quadratic,
    true_hypergrad,
)
from .projection import ProjectionSpec, prox_step
from .smoothing import zo_grad_x, zo_grad_y, zo_hess_xx, zo_hess_xy, zo_hess_yy_apply
from .solver_jh import JHConfig, inner_loop_y, jh_schedule, outer_step_jh, run_jh
from .solver_penalty import InnerPairState, PenaltyConfig, inner_step_pair, outer_step_penalty, penalty_schedule, run_penalty
from .trace import ConvergenceTrace, TraceRecord

__version__ = "0.1.0"

__all__ = [
    "BilevelProblem",
    "ConfigError",
    "ConvergenceTrace",
    "DivergenceError",
    "FunctionOracle",
    "HessInvConfig",
    "HyperRepSpec",
    "InnerPairState",
    "InvalidDimensionError",
    "InvalidParameterError",
    "JHConfig",
    "NumericError",
    "PenaltyConfig",
    "Point",
    "ProblemConstants",
    "ProjectionSpec",
    "QuadraticBilevelSpec",
    "QueryCounter",
    "RngStream",
    "SmoothingParams",
    "StochasticScalarOracle",
    "TraceRecord",
    "UnsupportedOperationError",
    "approx_hess_inv_vec",
    "derive_stream",
    "hessinv_schedule",
    "inner_loop_y",
    "inner_step_pair",
    "jh_schedule",
    "make_hyper_rep",
    "make_quadratic",
    "outer_step_jh",
    "outer_step_penalty",
    "penalty_schedule",
    "prox_step",
    "run_jh",
    "run_penalty",
    "sample_gaussian",
    "true_hypergrad",
    "zo_grad_x",
    "zo_grad_y",
    "zo_hess_xx",
    "zo_hess_xy",
    "zo_hess_yy_apply",
]
