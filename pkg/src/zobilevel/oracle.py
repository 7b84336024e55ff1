"""Noisy scalar oracles with exact evaluation accounting."""

from __future__ import annotations

import numpy as np

from .core import EvalTally, NumericError, RngStream


class StochasticScalarOracle:
    """Batched access to a stochastic function ``Q(x, y, noise)``.

    Subclasses implement :meth:`_evaluate` on stacked rows and
    :meth:`sample_noise`. A call on ``N`` rows counts ``N`` evaluations.
    Rows that receive the same noise sample see the same realisation, which
    is how estimators share one noise draw between paired evaluations.

    Parameters
    ----------
    n, m : int
        Dimensions of the x and y blocks.
    """

    def __init__(self, n: int, m: int):
        self.n = int(n)
        self.m = int(m)
        self.tally = EvalTally()

    @property
    def n_evals(self) -> int:
        return self.tally.count

    def sample_noise(self, stream: RngStream, size: int) -> np.ndarray:
        """Draw ``size`` independent noise samples; first axis indexes samples."""
        return np.zeros((size, 0))

    def _evaluate(self, X: np.ndarray, Y: np.ndarray, noise: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, X, Y, noise) -> np.ndarray:
        X = np.atleast_2d(X)
        Y = np.atleast_2d(Y)
        rows = X.shape[0]
        self.tally.add(rows)
        values = np.asarray(self._evaluate(X, Y, noise), dtype=float)
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise NumericError(f"oracle returned a non-finite value at row {bad}", index=bad, tag="oracle")
        return values

    def value(self, x, y, noise) -> float:
        """Single evaluation with one noise sample."""
        return float(self(np.asarray(x)[None, :], np.asarray(y)[None, :], np.asarray(noise)[None, ...])[0])


class FunctionOracle(StochasticScalarOracle):
    """Oracle wrapping a deterministic vectorised function ``func(X, Y) -> values``.

    An optional additive value noise ``sigma * N(0, 1)`` is applied per sample.
    """

    def __init__(self, func, n: int, m: int, sigma: float = 0.0):
        super().__init__(n, m)
        self.func = func
        self.sigma = float(sigma)

    def sample_noise(self, stream, size):
        if self.sigma == 0.0:
            return np.zeros(size)
        return stream.normal(size)

    def _evaluate(self, X, Y, noise):
        out = self.func(X, Y)
        if self.sigma != 0.0:
            out = out + self.sigma * noise
        return out
