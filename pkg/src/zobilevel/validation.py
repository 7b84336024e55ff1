"""Independent checks of the estimators and solvers.

Finite differences, Monte-Carlo means and closed-form moment bounds. Every
check returns a :class:`CheckResult`, so a full run serializes to one record
per check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import InvalidParameterError, RngStream, SmoothingParams, check_vector
from .oracle import FunctionOracle

DEFAULT_Z = 5.0
DEFAULT_SLACK = 0.2


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check: ``passed`` iff ``measured <= bound``."""

    name: str
    measured: float
    bound: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def fd_grad(func, x, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    if not h > 0:
        raise InvalidParameterError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        g[i] = (func(x + e) - func(x - e)) / (2.0 * h)
        e[i] = 0.0
    return g


@dataclass(frozen=True)
class MCReport(CheckResult):
    """Monte-Carlo mean check; also carries the empirical second moment."""

    second_moment: float = math.nan
    n_draws: int = 0


def mc_mean_check(sampler, target, M: int, z: float = DEFAULT_Z, name: str = "mc_mean") -> MCReport:
    """Compare the sample mean of ``M`` estimator draws with ``target``.

    Parameters
    ----------
    sampler : callable
        ``sampler(M)`` returns an array of ``M`` draws stacked on axis 0.
    target : array_like
    M : int
        Number of draws, at least 100.
    z : float
        Gate in standard errors. Passes iff ``||mean - target||`` is at most
        ``z`` times the aggregate standard error ``sqrt(sum_i se_i^2)``.
    """
    if M < 100:
        raise InvalidParameterError("M must be at least 100")
    draws = np.asarray(sampler(M), dtype=float).reshape(M, -1)
    target = np.asarray(target, dtype=float).ravel()
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / math.sqrt(M)
    err = float(np.linalg.norm(mean - target))
    gate = z * float(np.sqrt(np.sum(se**2)))
    second = float(np.mean(np.sum(draws**2, axis=1)))
    return MCReport(name, err, gate, bool(err <= gate), f"z={z}", second, M)


# closed-form second-moment bounds


def grad_x_moment_bound(n, m, eta, mu, l1q, grad_x_norm, grad_y_norm, sig1q2=0.0, n_samples=1) -> float:
    """Bound on ``E||g_x||^2`` for the forward-difference x-gradient estimator."""
    if eta <= 0:
        return math.inf
    N = n_samples
    smooth = l1q**2 * (eta**2 * (n + 6) ** 3 + mu**4 / eta**2 * n * (m + 4) ** 2)
    own = 4 * (n + 2) * (sig1q2 + grad_x_norm**2)
    cross = 4 * mu**2 / eta**2 * n * (sig1q2 + grad_y_norm**2)
    return (smooth + own + cross) / N


def grad_y_moment_bound(n, m, eta, mu, l1q, grad_x_norm, grad_y_norm, sig1q2=0.0, n_samples=1) -> float:
    """Bound on ``E||g_y||^2``; the x-bound with the blocks swapped."""
    return grad_x_moment_bound(m, n, mu, eta, l1q, grad_y_norm, grad_x_norm, sig1q2, n_samples)


def hess_xy_moment_bound(n, m, eta, mu, l2q, fro_xx, fro_xy, fro_yy, theta_norm, sig2q2=0.0, n_samples=1) -> float:
    """Bound on ``E||H_xy theta||^2`` for the central-difference mixed Hessian."""
    if eta <= 0 or mu <= 0:
        return math.inf
    smooth = 8 * l2q**2 * (eta**4 / mu**2 * (n + 8) ** 4 + 2 * mu**4 / eta**2 * n * (m + 12) ** 3)
    var = (
        6 * eta**2 / mu**2 * (n + 4) * (n + 2) * (sig2q2 + fro_xx**2)
        + 36 * (n + 2) * (sig2q2 + fro_xy**2)
        + 30 * mu**2 / eta**2 * n * (m + 2) * (sig2q2 + fro_yy**2)
    )
    return (smooth + var) * theta_norm**2 / n_samples


def hess_xx_moment_bound(n, m, eta, mu, l2q, fro_xx, fro_xy, fro_yy, theta_norm) -> float:
    """Bound on ``E||H_xx theta||^2`` for one sample of the central-difference x-block Hessian."""
    if eta <= 0:
        return math.inf
    smooth = 2 * l2q**2 * (2 * eta**2 * (n + 16) ** 4 + mu**6 / eta**4 * (m + 6) ** 3 * (n + 3))
    var = (
        7.5 * (n + 6) ** 2 * fro_xx**2
        + 3 * mu**2 / eta**2 * (3 * n + 13) * fro_xy**2
        + 1.5 * mu**4 / eta**4 * (m + 2) * (n + 3) * fro_yy**2
    )
    return (smooth + var) * theta_norm**2


def hess_yy_moment_bound(n, m, eta, mu, l2q, fro_xx, fro_xy, fro_yy, theta_norm) -> float:
    """Bound on ``E||H_yy theta||^2``; the x-block bound with the blocks swapped."""
    return hess_xx_moment_bound(m, n, mu, eta, l2q, fro_yy, fro_xy, fro_xx, theta_norm)


def smoothed_gap_bound(l1g, lam_g, eta2, mu2, n, m) -> float:
    """Bound on ``||y*_{eta2,mu2}(x) - y*(x)||^2``."""
    return 2.0 * l1g / lam_g * (eta2**2 * n + mu2**2 * m)


def bound_audit(name: str, measured: float, bound: float, slack: float = DEFAULT_SLACK) -> CheckResult:
    """Pass iff ``measured <= (1 + slack) * bound``; flags non-finite bounds."""
    if not math.isfinite(bound):
        return CheckResult(name, measured, bound, False, "bound diverges in this parameter regime")
    return CheckResult(name, measured, bound, bool(measured <= (1.0 + slack) * bound), f"slack={slack}")


def bound_audit_grad(params: SmoothingParams, dims, consts, measured_second_moment, *, block="x", grad_norms=(0.0, 0.0), n_samples=1, slack=DEFAULT_SLACK) -> CheckResult:
    """Audit a measured gradient-estimator second moment against its bound.

    ``params.eta1``/``params.mu1`` are the radii and ``consts.l1f`` the
    smoothness constant; ``grad_norms`` are ``(||grad_x q||, ||grad_y q||)``.
    """
    n, m = dims
    fn = grad_x_moment_bound if block == "x" else grad_y_moment_bound
    b = fn(n, m, params.eta1, params.mu1, consts.l1f, grad_norms[0], grad_norms[1], consts.sig1f2, n_samples)
    return bound_audit(f"grad_{block}_moment", float(measured_second_moment), b, slack)


# test problems


class QuadraticForm:
    """``q(x, y) = 1/2 w^T A w + c^T w`` with ``w = (x, y)`` and exact derivatives."""

    def __init__(self, n, m, seed=0, scale=1.0):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((n + m, n + m)) / math.sqrt(n + m)
        self.A = scale * (M + M.T) / 2
        self.c = rng.standard_normal(n + m)
        self.n, self.m = n, m

    def __call__(self, X, Y):
        W = np.concatenate([X, Y], axis=1)
        return 0.5 * np.einsum("ij,ij->i", W @ self.A, W) + W @ self.c

    def grad(self, x, y):
        g = self.A @ np.concatenate([x, y]) + self.c
        return g[: self.n], g[self.n :]

    @property
    def blocks(self):
        n = self.n
        return self.A[:n, :n], self.A[:n, n:], self.A[n:, n:]

    @property
    def lipschitz(self):
        return float(np.abs(np.linalg.eigvalsh(self.A)).max())

    def oracle(self, sigma=0.0):
        return FunctionOracle(self, self.n, self.m, sigma=sigma)


def estimator_moment_checks(n=4, m=4, eta=1e-2, mu=1e-2, M=100_000, seed=0, sigma=0.01, z=DEFAULT_Z, slack=DEFAULT_SLACK):
    """Mean and second-moment checks of all five estimators on a quadratic oracle.

    Returns a list of :class:`CheckResult`; the mean checks compare with the
    exact derivatives, which coincide with the smoothed ones for quadratics.
    """
    from .smoothing import grad_x_samples, grad_y_samples, hess_xx_samples, hess_xy_samples, hess_yy_apply_samples

    q = QuadraticForm(n, m, seed)
    Q = q.oracle(sigma)
    root = RngStream(seed).derive("moments", 0)
    rng = np.random.default_rng(seed + 1)
    x, y = rng.standard_normal(n), rng.standard_normal(m)
    theta_x, theta_y = rng.standard_normal(n), rng.standard_normal(m)
    gx, gy = q.grad(x, y)
    Axx, Axy, Ayy = q.blocks
    L = q.lipschitz
    fro = (np.linalg.norm(Axx), np.linalg.norm(Axy), np.linalg.norm(Ayy))
    out = []

    def add(name, draws, target, bound):
        rep = mc_mean_check(lambda _: draws, target, M, z, name=f"{name}_mean")
        out.append(rep)
        out.append(bound_audit(f"{name}_second_moment", rep.second_moment, bound, slack))

    gnx, gny = float(np.linalg.norm(gx)), float(np.linalg.norm(gy))
    add("grad_x", grad_x_samples(Q, x, y, eta, mu, M, root.derive("gx", 0)), gx,
        grad_x_moment_bound(n, m, eta, mu, L, gnx, gny))
    add("grad_y", grad_y_samples(Q, x, y, eta, mu, M, root.derive("gy", 0)), gy,
        grad_y_moment_bound(n, m, eta, mu, L, gnx, gny))
    Hxy = hess_xy_samples(Q, x, y, eta, mu, M, root.derive("hxy", 0))
    add("hess_xy", Hxy @ theta_y, Axy @ theta_y,
        hess_xy_moment_bound(n, m, eta, mu, 0.0, *fro, float(np.linalg.norm(theta_y))))
    Hxx = hess_xx_samples(Q, x, y, eta, mu, M, root.derive("hxx", 0))
    add("hess_xx", Hxx @ theta_x, Axx @ theta_x,
        hess_xx_moment_bound(n, m, eta, mu, 0.0, *fro, float(np.linalg.norm(theta_x))))
    Hyy = hess_yy_apply_samples(Q, x, y, eta, mu, theta_y, M, root.derive("hyy", 0))
    add("hess_yy", Hyy, Ayy @ theta_y,
        hess_yy_moment_bound(n, m, eta, mu, 0.0, *fro, float(np.linalg.norm(theta_y))))
    return out


def smoothed_gap_check(problem, params: SmoothingParams, xs, stream: RngStream, *, t: int = 3000, tol: float = 1e-6):
    """Distance between the zeroth-order inner-loop limit and ``y*(x)`` on a quadratic.

    A quadratic lower level is shifted only by a constant under Gaussian
    smoothing, so the smoothed minimizer equals ``y*(x)``. The inner loop is
    run with the lower radius ``mu2`` from ``params`` at a step well inside
    the stability region. Returns one zero-gap check and one bound check per
    probe point.
    """
    from .solver_jh import inner_loop_y

    c = problem.constants
    beta = 0.5 / ((problem.m + 2) * c.l1g)
    bound = smoothed_gap_bound(c.l1g, c.lam_g, params.eta2, params.mu2, problem.n, problem.m)
    out = []
    for i, x in enumerate(xs):
        x = check_vector(x, problem.n, "x")
        y_star = problem.y_star(x)
        y = inner_loop_y(problem.oracle_G, x, np.zeros(problem.m), beta, t, params.mu2, stream.derive("gap", i))
        gap = float(np.linalg.norm(y - y_star))
        out.append(CheckResult(f"smoothed_gap_zero[{i}]", gap, tol, gap <= tol))
        out.append(CheckResult(f"smoothed_gap_bound[{i}]", gap**2, bound, gap**2 <= bound + tol**2))
    return out


def run_validation_suite(seed: int = 0, M: int = 20_000) -> list[CheckResult]:
    """Fast end-to-end battery used by the ``validate`` command."""
    from .problems import QuadraticBilevelSpec, make_quadratic
    from .solver_penalty import InnerPairState, inner_loop_pair

    out = []
    x0 = np.linspace(-1.0, 1.0, 6)
    err = float(np.abs(fd_grad(lambda v: 0.5 * v @ v, x0, 1e-4) - x0).max())
    out.append(CheckResult("fd_grad_quadratic", err, 1e-8, err <= 1e-8))
    err = float(np.abs(fd_grad(lambda v: np.sin(v).sum(), np.zeros(5), 1e-4) - 1.0).max())
    out.append(CheckResult("fd_grad_sine", err, 1e-6, err <= 1e-6))

    out.extend(estimator_moment_checks(M=M, seed=seed))

    P = make_quadratic(QuadraticBilevelSpec.random(6, 6, seed=seed, noise_sigma_f=0.01, noise_sigma_g=0.01))
    rng = np.random.default_rng(seed)
    probes = [rng.standard_normal(P.n) for _ in range(3)]
    for i, x in enumerate(probes):
        a = P.hypergrad(x)
        b = fd_grad(P.psi, x, 1e-5)
        rel = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))
        out.append(CheckResult(f"quadratic_hypergrad_fd[{i}]", rel, 1e-4, rel <= 1e-4))
        res = float(np.linalg.norm(P.grad_y_g(x, P.y_star(x))))
        out.append(CheckResult(f"quadratic_lower_stationarity[{i}]", res, 1e-8, res <= 1e-8))
    out.extend(smoothed_gap_check(P, SmoothingParams(1e-3, 1e-3, 1e-7, 1e-7), probes, RngStream(seed)))

    st = inner_loop_pair(P.oracle_F, P.oracle_G, probes[0], InnerPairState(np.ones(6), np.ones(6)),
                         0.01, 500, math.inf, 1e-3, RngStream(seed).derive("pair", 0))
    diff = float(np.abs(st.y - st.z).max())
    out.append(CheckResult("shared_noise_cancellation", diff, 0.0, diff == 0.0))
    return out
