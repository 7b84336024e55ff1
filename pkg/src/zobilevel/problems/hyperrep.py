"""Hyper-representation bilevel problem.

The upper variable ``x`` is a ``d_in x d_out`` weight matrix (flattened
row-major) defining features ``T(chi; x) = tanh(chi @ X)``; the lower variable
``y`` is a ridge regressor on those features.

    f(x, y) = 1/(2 n1) ||T(chi1; x) y - b1||^2 + gamma/2 ||x||^2
    g(x, y) = 1/(2 n2) ||T(chi2; x) y - b2||^2 + gamma/2 ||y||^2

Stochastic oracles evaluate the same losses on a uniformly random subset of
``minibatch_rows`` data rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import ConfigError, check_vector
from ..oracle import StochasticScalarOracle
from .base import BilevelProblem

FD_STEP = 1e-5


@dataclass(frozen=True)
class HyperRepSpec:
    d_in: int
    d_out: int
    chi1: np.ndarray = field(repr=False)
    chi2: np.ndarray = field(repr=False)
    b1: np.ndarray = field(repr=False)
    b2: np.ndarray = field(repr=False)
    gamma: float = 1e-6
    minibatch_rows: int = 5
    init_scale: float = 1.0

    def __post_init__(self):
        chi1 = np.atleast_2d(np.asarray(self.chi1, dtype=float))
        chi2 = np.atleast_2d(np.asarray(self.chi2, dtype=float))
        b1 = np.asarray(self.b1, dtype=float).ravel()
        b2 = np.asarray(self.b2, dtype=float).ravel()
        if self.d_in < 1 or self.d_out < 1:
            raise ConfigError("d_in and d_out must be positive")
        if chi1.shape[1] != self.d_in or chi2.shape[1] != self.d_in:
            raise ConfigError("feature matrices must have d_in columns")
        if b1.size != chi1.shape[0] or b2.size != chi2.shape[0]:
            raise ConfigError("responses must match the number of rows")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not 1 <= self.minibatch_rows <= min(chi1.shape[0], chi2.shape[0]):
            raise ConfigError(f"minibatch_rows must lie in [1, min(n1, n2)], got {self.minibatch_rows}")
        for name, val in (("chi1", chi1), ("chi2", chi2), ("b1", b1), ("b2", b2)):
            object.__setattr__(self, name, val)

    @property
    def n1(self):
        return self.chi1.shape[0]

    @property
    def n2(self):
        return self.chi2.shape[0]

    @property
    def n(self):
        return self.d_in * self.d_out

    @property
    def m(self):
        return self.d_out

    @classmethod
    def planted(
        cls,
        d_in: int,
        d_out: int,
        n1: int,
        n2: int,
        seed: int,
        *,
        gamma: float = 1e-6,
        minibatch_rows: int = 5,
        label_noise: float = 0.0,
        init_scale: float = 1.0,
    ) -> tuple["HyperRepSpec", np.ndarray, np.ndarray]:
        """Realizable instance ``b_i = T(chi_i; x0) y0 (+ noise)``.

        Returns the spec and the planted ``(x0, y0)``. Feature entries are
        standard normal; ``x0`` has entries ``N(0, 1/d_in)`` so the
        pre-activations are of unit scale.
        """
        rng = np.random.default_rng(seed)
        chi1 = rng.standard_normal((n1, d_in))
        chi2 = rng.standard_normal((n2, d_in))
        X0 = rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)
        y0 = rng.standard_normal(d_out) / np.sqrt(d_out)
        b1 = np.tanh(chi1 @ X0) @ y0 + label_noise * rng.standard_normal(n1)
        b2 = np.tanh(chi2 @ X0) @ y0 + label_noise * rng.standard_normal(n2)
        spec = cls(d_in, d_out, chi1, chi2, b1, b2, gamma, minibatch_rows, init_scale)
        return spec, X0.ravel(), y0

    def to_dict(self) -> dict:
        return {
            "d_in": self.d_in,
            "d_out": self.d_out,
            "chi1": self.chi1.tolist(),
            "chi2": self.chi2.tolist(),
            "b1": self.b1.tolist(),
            "b2": self.b2.tolist(),
            "gamma": self.gamma,
            "minibatch_rows": self.minibatch_rows,
            "init_scale": self.init_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperRepSpec":
        return cls(**d)


def _features(chi_rows, X):
    """``tanh`` features for a batch: ``chi_rows`` is (N, k, d_in), ``X`` is (N, d_in, d_out)."""
    return np.tanh(np.matmul(chi_rows, X))


class _SubsetLossOracle(StochasticScalarOracle):
    """Ridge-regression loss on a random row subset; noise rows are sorted index sets."""

    def __init__(self, spec: HyperRepSpec, chi, b, reg_on_x: bool):
        super().__init__(spec.n, spec.m)
        self.spec = spec
        self.chi = chi
        self.b = b
        self.k = spec.minibatch_rows
        self.reg_on_x = reg_on_x

    def sample_noise(self, stream, size):
        return np.sort(stream.subsets(self.chi.shape[0], self.k, size), axis=1)

    def _evaluate(self, X, Y, noise):
        N = X.shape[0]
        idx = np.asarray(noise, dtype=np.intp)
        T = _features(self.chi[idx], X.reshape(N, self.spec.d_in, self.spec.d_out))
        r = np.einsum("nko,no->nk", T, Y) - self.b[idx]
        loss = np.einsum("nk,nk->n", r, r) / (2.0 * idx.shape[1])
        reg = X if self.reg_on_x else Y
        return loss + 0.5 * self.spec.gamma * np.einsum("ij,ij->i", reg, reg)


class HyperRepBilevel(BilevelProblem):
    """Hyper-representation instance with a ridge-solve lower level.

    ``y_star`` is the exact ridge solution and ``hypergrad`` a central finite
    difference (step ``1e-5``) of ``psi(x) = f(x, y*(x))``; neither touches the
    query counters.
    """

    name = "hyper_rep"
    has_analytic = True

    def __init__(self, spec: HyperRepSpec):
        self.spec = spec
        F = _SubsetLossOracle(spec, spec.chi1, spec.b1, reg_on_x=True)
        G = _SubsetLossOracle(spec, spec.chi2, spec.b2, reg_on_x=False)
        super().__init__(F, G, constants=None, minibatch_rows=spec.minibatch_rows)

    def initial_point(self, stream):
        s = self.spec.init_scale
        x = s * stream.normal(self.n) / np.sqrt(self.spec.d_in)
        y = s * stream.normal(self.m) / np.sqrt(self.spec.d_out)
        return x, y

    def _X(self, x):
        return check_vector(x, self.n, "x").reshape(self.spec.d_in, self.spec.d_out)

    def f(self, x, y):
        r = np.tanh(self.spec.chi1 @ self._X(x)) @ y - self.spec.b1
        return float(r @ r) / (2 * self.spec.n1) + 0.5 * self.spec.gamma * float(np.dot(x, x))

    def g(self, x, y):
        r = np.tanh(self.spec.chi2 @ self._X(x)) @ y - self.spec.b2
        return float(r @ r) / (2 * self.spec.n2) + 0.5 * self.spec.gamma * float(np.dot(y, y))

    def grad_y_g(self, x, y):
        T = np.tanh(self.spec.chi2 @ self._X(x))
        return T.T @ (T @ y - self.spec.b2) / self.spec.n2 + self.spec.gamma * y

    def _y_star_batch(self, Xs):
        """Ridge solutions for a stack of weight matrices (N, d_in, d_out)."""
        sp = self.spec
        T = np.tanh(np.matmul(sp.chi2[None], Xs))
        A = np.matmul(T.transpose(0, 2, 1), T) / sp.n2 + sp.gamma * np.eye(sp.d_out)
        rhs = np.matmul(T.transpose(0, 2, 1), sp.b2) / sp.n2
        return np.linalg.solve(A, rhs[..., None])[..., 0]

    def _psi_batch(self, Xs):
        sp = self.spec
        Ys = self._y_star_batch(Xs)
        T = np.tanh(np.matmul(sp.chi1[None], Xs))
        r = np.einsum("nko,no->nk", T, Ys) - sp.b1
        flat = Xs.reshape(Xs.shape[0], -1)
        return np.einsum("nk,nk->n", r, r) / (2 * sp.n1) + 0.5 * sp.gamma * np.einsum("ij,ij->i", flat, flat)

    def y_star(self, x):
        return self._y_star_batch(self._X(x)[None])[0]

    def psi(self, x):
        return float(self._psi_batch(self._X(x)[None])[0])

    def hypergrad(self, x, h: float = FD_STEP, chunk: int = 256):
        x = check_vector(x, self.n, "x")
        sp = self.spec
        grad = np.empty(self.n)
        for lo in range(0, self.n, chunk):
            idx = np.arange(lo, min(lo + chunk, self.n))
            P = np.repeat(x[None], 2 * idx.size, axis=0)
            P[np.arange(idx.size), idx] += h
            P[idx.size + np.arange(idx.size), idx] -= h
            vals = self._psi_batch(P.reshape(-1, sp.d_in, sp.d_out))
            grad[idx] = (vals[: idx.size] - vals[idx.size :]) / (2 * h)
        return grad


def make_hyper_rep(spec: HyperRepSpec) -> HyperRepBilevel:
    return HyperRepBilevel(spec)
