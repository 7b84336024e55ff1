"""Estimator-style wrappers around the two solvers.

``fit`` takes a :class:`~zobilevel.problems.BilevelProblem` instead of a data
matrix; hyperparameters are flat constructor arguments so ``get_params``,
``set_params`` and ``sklearn.base.clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .core import SmoothingParams
from .problems.base import BilevelProblem, true_hypergrad
from .projection import ProjectionSpec
from .solver_jh import JHConfig, run_jh
from .solver_penalty import PenaltyConfig, run_penalty


def _check_problem(problem):
    if not isinstance(problem, BilevelProblem):
        raise TypeError(f"expected a BilevelProblem, got {type(problem).__name__}")
    return problem


class _SolverBase(BaseEstimator):
    def _finish(self, problem, trace):
        self.trace_ = trace
        self.x_ = trace.x_final
        self.y_ = trace.y_final
        self.x_out_ = trace.x_output if trace.x_output is not None else trace.x_final
        self.chosen_index_ = trace.chosen_index
        last = trace.records[-1]
        self.n_f_evals_ = last.f_evals
        self.n_g_evals_ = last.g_evals
        self.n_features_in_ = problem.n
        return self

    def score(self, problem, x=None):
        """Negative true hypergradient norm at ``x`` (default: the final iterate)."""
        _check_problem(problem)
        x = self.x_ if x is None else x
        return -float(np.linalg.norm(true_hypergrad(problem, x)))


class ZerothOrderJH(_SolverBase):
    """Double-loop solver with a zeroth-order Hessian-inverse approximation.

    Parameters
    ----------
    n_outer, alpha, beta, t_k, s_k, b_k, hessinv_beta
        See :class:`~zobilevel.solver_jh.JHConfig`.
    eta1, mu1, eta2, mu2 : float
        Smoothing radii.
    projection : ProjectionSpec, optional
    log_stride : int
    warm_start : bool
    random_state : int
        Root seed of all draws, including the start point.

    Attributes
    ----------
    x_ : ndarray
        Final upper iterate.
    x_out_ : ndarray
        Randomly selected output iterate.
    y_ : ndarray
        Final lower iterate.
    trace_ : ConvergenceTrace
    n_f_evals_, n_g_evals_ : int
    """

    def __init__(
        self,
        n_outer=50,
        alpha=0.1,
        beta=0.01,
        t_k=100,
        s_k=100,
        b_k=1000,
        hessinv_beta=1e-3,
        eta1=1e-3,
        mu1=1e-3,
        eta2=1e-2,
        mu2=1e-2,
        projection=None,
        log_stride=1,
        warm_start=True,
        random_state=0,
    ):
        self.n_outer = n_outer
        self.alpha = alpha
        self.beta = beta
        self.t_k = t_k
        self.s_k = s_k
        self.b_k = b_k
        self.hessinv_beta = hessinv_beta
        self.eta1 = eta1
        self.mu1 = mu1
        self.eta2 = eta2
        self.mu2 = mu2
        self.projection = projection
        self.log_stride = log_stride
        self.warm_start = warm_start
        self.random_state = random_state

    def to_config(self) -> JHConfig:
        return JHConfig(
            n_outer=self.n_outer,
            alpha=self.alpha,
            beta=self.beta,
            t_k=self.t_k,
            s_k=self.s_k,
            b_k=self.b_k,
            smoothing=SmoothingParams(self.eta1, self.mu1, self.eta2, self.mu2),
            hessinv_beta=self.hessinv_beta,
            projection=self.projection or ProjectionSpec(),
            log_stride=self.log_stride,
            warm_start=self.warm_start,
        )

    @classmethod
    def from_config(cls, cfg: JHConfig, random_state=0):
        sm = cfg.smoothing
        return cls(
            n_outer=cfg.n_outer, alpha=cfg.alpha, beta=cfg.beta, t_k=cfg.t_k, s_k=cfg.s_k, b_k=cfg.b_k,
            hessinv_beta=cfg.hessinv_beta, eta1=sm.eta1, mu1=sm.mu1, eta2=sm.eta2, mu2=sm.mu2,
            projection=cfg.projection, log_stride=cfg.log_stride, warm_start=cfg.warm_start,
            random_state=random_state,
        )

    def fit(self, problem, x0=None, y0=None):
        problem = _check_problem(problem)
        trace = run_jh(problem, self.to_config(), self.random_state, x0=x0, y0=y0)
        return self._finish(problem, trace)


class ZerothOrderPenalty(_SolverBase):
    """Penalty-based fully zeroth-order solver.

    Parameters mirror :class:`~zobilevel.solver_penalty.PenaltyConfig`; ``eta``
    and ``mu`` are the x- and y-radii shared by both levels.
    """

    def __init__(
        self,
        n_outer=50,
        alpha=0.1,
        beta=0.01,
        t_k=100,
        s_k=100,
        lam=10.0,
        eta=1e-3,
        mu=1e-3,
        projection=None,
        log_stride=1,
        warm_start=True,
        inner_f_point="y",
        outer_form="surrogate",
        random_state=0,
    ):
        self.n_outer = n_outer
        self.alpha = alpha
        self.beta = beta
        self.t_k = t_k
        self.s_k = s_k
        self.lam = lam
        self.eta = eta
        self.mu = mu
        self.projection = projection
        self.log_stride = log_stride
        self.warm_start = warm_start
        self.inner_f_point = inner_f_point
        self.outer_form = outer_form
        self.random_state = random_state

    def to_config(self) -> PenaltyConfig:
        return PenaltyConfig(
            n_outer=self.n_outer,
            alpha=self.alpha,
            beta=self.beta,
            t_k=self.t_k,
            s_k=self.s_k,
            lam=self.lam,
            smoothing=SmoothingParams(self.eta, self.mu, self.eta, self.mu),
            projection=self.projection or ProjectionSpec(),
            log_stride=self.log_stride,
            warm_start=self.warm_start,
            inner_f_point=self.inner_f_point,
            outer_form=self.outer_form,
        )

    @classmethod
    def from_config(cls, cfg: PenaltyConfig, random_state=0):
        return cls(
            n_outer=cfg.n_outer, alpha=cfg.alpha, beta=cfg.beta, t_k=cfg.t_k, s_k=cfg.s_k, lam=cfg.lam,
            eta=cfg.smoothing.eta1, mu=cfg.smoothing.mu1, projection=cfg.projection, log_stride=cfg.log_stride,
            warm_start=cfg.warm_start, inner_f_point=cfg.inner_f_point, outer_form=cfg.outer_form,
            random_state=random_state,
        )

    def fit(self, problem, x0=None, y0=None):
        problem = _check_problem(problem)
        trace = run_penalty(problem, self.to_config(), self.random_state, x0=x0, y0=y0)
        return self._finish(problem, trace)
