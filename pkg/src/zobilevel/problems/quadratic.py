"""Quadratic bilevel instances with closed-form lower solution and hypergradient.

Lower level ``g(x, y) = 1/2 y^T B y - y^T C x`` and upper level
``f(x, y) = 1/2 ||y - y_tgt||^2 + rho/2 ||x||^2``, so ``y*(x) = B^{-1} C x``
and ``grad psi(x) = rho x + C^T B^{-1} (y*(x) - y_tgt)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ortho_group

from ..core import ConfigError, ProblemConstants, check_vector
from ..oracle import StochasticScalarOracle
from .base import BilevelProblem


@dataclass(frozen=True)
class QuadraticBilevelSpec:
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    y_tgt: np.ndarray = field(repr=False)
    rho: float = 1.0
    noise_sigma_f: float = 0.0
    noise_sigma_g: float = 0.0
    init_scale: float = 1.0

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        y_tgt = np.asarray(self.y_tgt, dtype=float).ravel()
        m = B.shape[0]
        if B.shape != (m, m) or C.shape[0] != m or y_tgt.size != m:
            raise ConfigError("inconsistent shapes: need B (m, m), C (m, n), y_tgt (m,)")
        if not np.allclose(B, B.T):
            raise ConfigError("B must be symmetric")
        if np.linalg.eigvalsh(B)[0] <= 0:
            raise ConfigError("B must be positive definite")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")
        if self.noise_sigma_f < 0 or self.noise_sigma_g < 0:
            raise ConfigError("noise levels must be non-negative")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "y_tgt", y_tgt)

    @property
    def n(self):
        return self.C.shape[1]

    @property
    def m(self):
        return self.B.shape[0]

    @property
    def lam_g(self):
        return float(np.linalg.eigvalsh(self.B)[0])

    @classmethod
    def random(
        cls,
        n: int,
        m: int,
        seed: int,
        *,
        eig_range=(1.0, 2.0),
        coupling=(0.5, 1.0),
        target_scale: float = 0.5,
        rho: float = 1.0,
        noise_sigma_f: float = 0.0,
        noise_sigma_g: float = 0.0,
        init_scale: float = 1.0,
    ) -> "QuadraticBilevelSpec":
        """Instance whose conditioning does not depend on ``n`` and ``m``.

        ``B`` has eigenvalues evenly spread over ``eig_range`` and ``C`` has
        singular values evenly spread over ``coupling``.
        """
        rng = np.random.default_rng(seed)
        Qm = ortho_group.rvs(m, random_state=rng) if m > 1 else np.ones((1, 1))
        B = Qm @ np.diag(np.linspace(*eig_range, m)) @ Qm.T
        B = 0.5 * (B + B.T)
        k = min(n, m)
        left = ortho_group.rvs(m, random_state=rng)[:, :k] if m > 1 else np.ones((1, 1))
        right = ortho_group.rvs(n, random_state=rng)[:, :k] if n > 1 else np.ones((1, 1))
        C = left @ np.diag(np.linspace(*coupling, k)) @ right.T
        y_tgt = target_scale * rng.standard_normal(m) / np.sqrt(m)
        return cls(B, C, y_tgt, rho, noise_sigma_f, noise_sigma_g, init_scale)

    def to_dict(self) -> dict:
        return {
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "y_tgt": self.y_tgt.tolist(),
            "rho": self.rho,
            "noise_sigma_f": self.noise_sigma_f,
            "noise_sigma_g": self.noise_sigma_g,
            "init_scale": self.init_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticBilevelSpec":
        return cls(**d)


class _UpperOracle(StochasticScalarOracle):
    def __init__(self, spec: QuadraticBilevelSpec):
        super().__init__(spec.n, spec.m)
        self.y_tgt = spec.y_tgt
        self.rho = spec.rho
        self.sigma = spec.noise_sigma_f

    def sample_noise(self, stream, size):
        return stream.normal(size) if self.sigma > 0 else np.zeros(size)

    def _evaluate(self, X, Y, noise):
        r = Y - self.y_tgt
        out = 0.5 * np.einsum("ij,ij->i", r, r) + 0.5 * self.rho * np.einsum("ij,ij->i", X, X)
        return out + self.sigma * noise if self.sigma > 0 else out


class _LowerOracle(StochasticScalarOracle):
    def __init__(self, spec: QuadraticBilevelSpec):
        super().__init__(spec.n, spec.m)
        self.B = spec.B
        self.Ct = np.ascontiguousarray(spec.C.T)
        self.sigma = spec.noise_sigma_g

    def sample_noise(self, stream, size):
        return stream.normal(size) if self.sigma > 0 else np.zeros(size)

    def _evaluate(self, X, Y, noise):
        out = np.einsum("ij,ij->i", Y, 0.5 * (Y @ self.B) - X @ self.Ct)
        return out + self.sigma * noise if self.sigma > 0 else out


class QuadraticBilevel(BilevelProblem):
    """Quadratic instance with analytic minimizers and penalty surrogate."""

    name = "quadratic"
    has_analytic = True

    def __init__(self, spec: QuadraticBilevelSpec, l0f_radius: float | None = None):
        self.spec = spec
        B, C = spec.B, spec.C
        self._Binv_C = np.linalg.solve(B, C)
        self._Binv = np.linalg.inv(B)
        hess_psi = spec.rho * np.eye(spec.n) + self._Binv_C.T @ self._Binv_C
        joint = np.block([[np.zeros((spec.n, spec.n)), -C.T], [-C, B]])
        radius = 3.0 * spec.init_scale * np.sqrt(spec.n) if l0f_radius is None else l0f_radius
        l0f = np.linalg.norm(self._Binv_C, 2) * radius + np.linalg.norm(spec.y_tgt)
        constants = ProblemConstants(
            l0f=float(l0f),
            l1f=max(1.0, spec.rho),
            l1g=float(np.abs(np.linalg.eigvalsh(joint)).max()),
            l2g=0.0,
            lam_g=spec.lam_g,
            l1psi=float(np.linalg.eigvalsh(hess_psi)[-1]),
        )
        super().__init__(_UpperOracle(spec), _LowerOracle(spec), constants=constants)
        self.hess_psi = hess_psi

    def initial_point(self, stream):
        s = self.spec.init_scale
        return s * stream.normal(self.n), s * stream.normal(self.m)

    # deterministic pieces
    def f(self, x, y):
        r = y - self.spec.y_tgt
        return 0.5 * float(r @ r) + 0.5 * self.spec.rho * float(x @ x)

    def g(self, x, y):
        return 0.5 * float(y @ self.spec.B @ y) - float(y @ self.spec.C @ x)

    def grad_x_f(self, x, y):
        return self.spec.rho * np.asarray(x, dtype=float)

    def grad_y_f(self, x, y):
        return np.asarray(y, dtype=float) - self.spec.y_tgt

    def grad_x_g(self, x, y):
        return -self.spec.C.T @ y

    def grad_y_g(self, x, y):
        return self.spec.B @ y - self.spec.C @ x

    def y_star(self, x):
        return self._Binv_C @ check_vector(x, self.n, "x")

    def psi(self, x):
        x = check_vector(x, self.n, "x")
        return self.f(x, self.y_star(x))

    def hypergrad(self, x):
        x = check_vector(x, self.n, "x")
        return self.spec.rho * x + self._Binv_C.T @ (self.y_star(x) - self.spec.y_tgt)

    def x_star(self):
        """Unconstrained minimizer of ``psi``."""
        return np.linalg.solve(self.hess_psi, self._Binv_C.T @ self.spec.y_tgt)

    # penalty surrogate
    def penalty_minimizers(self, x, lam):
        """``(y*_lam(x), z*(x))``: minimizers of ``f/lam + g`` and of ``g`` in y."""
        x = check_vector(x, self.n, "x")
        B, C = self.spec.B, self.spec.C
        y = np.linalg.solve(B + np.eye(self.m) / lam, C @ x + self.spec.y_tgt / lam)
        return y, self._Binv_C @ x

    def surrogate_grad(self, x, lam, y=None, z=None):
        """Gradient of ``L*(x)`` at the exact minimizers, or at the given ``y``, ``z``."""
        x = check_vector(x, self.n, "x")
        if y is None or z is None:
            y, z = self.penalty_minimizers(x, lam)
        return self.grad_x_f(x, y) + lam * (self.grad_x_g(x, y) - self.grad_x_g(x, z))

    def local_l0f(self, x, lam):
        """Largest ``||grad_y f||`` at the two penalty minimizers.

        ``f`` is not globally Lipschitz here, so bounds that need ``L_{0,f}``
        use this local value.
        """
        y, z = self.penalty_minimizers(x, lam)
        return max(float(np.linalg.norm(self.grad_y_f(x, y))), float(np.linalg.norm(self.grad_y_f(x, z))))


def make_quadratic(spec: QuadraticBilevelSpec) -> QuadraticBilevel:
    return QuadraticBilevel(spec)
