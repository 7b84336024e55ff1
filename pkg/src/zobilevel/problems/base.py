from __future__ import annotations

import numpy as np

from ..core import ProblemConstants, QueryCounter, RngStream, UnsupportedOperationError, check_vector
from ..oracle import StochasticScalarOracle


class BilevelProblem:
    """Stochastic bilevel problem ``min_x f(x, y*(x))``, ``y*(x) = argmin_y g(x, y)``.

    Parameters
    ----------
    oracle_F, oracle_G : StochasticScalarOracle
        Noisy access to the upper and lower functions.
    constants : ProblemConstants, optional
        Regularity constants, when known.
    minibatch_rows : int
        Data rows behind one oracle call; scales query counts for reporting.
    """

    name = "bilevel"

    def __init__(
        self,
        oracle_F: StochasticScalarOracle,
        oracle_G: StochasticScalarOracle,
        constants: ProblemConstants | None = None,
        minibatch_rows: int = 1,
    ):
        if (oracle_F.n, oracle_F.m) != (oracle_G.n, oracle_G.m):
            raise ValueError("upper and lower oracles disagree on dimensions")
        self.oracle_F = oracle_F
        self.oracle_G = oracle_G
        self.n = oracle_F.n
        self.m = oracle_F.m
        self.constants = constants
        self.minibatch_rows = int(minibatch_rows)

    has_analytic = False

    def queries(self) -> QueryCounter:
        return QueryCounter(self.oracle_F.n_evals, self.oracle_G.n_evals)

    def initial_point(self, stream: RngStream):
        """Random ``(x0, y0)``; standard normal unless a subclass overrides it."""
        return stream.normal(self.n), stream.normal(self.m)

    def y_star(self, x) -> np.ndarray:
        raise UnsupportedOperationError(f"{self.name} has no analytic lower-level solution")

    def psi(self, x) -> float:
        raise UnsupportedOperationError(f"{self.name} has no analytic upper objective")

    def hypergrad(self, x) -> np.ndarray:
        raise UnsupportedOperationError(f"{self.name} has no analytic hypergradient")


def true_hypergrad(problem: BilevelProblem, x) -> np.ndarray:
    """Exact (or finite-difference) hypergradient; never touches the query counters."""
    if not problem.has_analytic:
        raise UnsupportedOperationError(f"{problem.name} has no analytic record")
    return problem.hypergrad(check_vector(x, problem.n, "x"))
