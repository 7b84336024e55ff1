"""Gaussian-smoothing estimators of partial derivatives from noisy function values.

Every estimator draws, in this order, the x-directions ``U`` (when the x-block
is perturbed), the y-directions ``V`` (when the y-block is perturbed) and one
noise sample per batch element from the supplied stream. All evaluations that
belong to one batch element share its noise sample.

Evaluation counts per call: ``2N`` for the gradient estimators, ``3N`` for the
Hessian estimators and ``3`` for :func:`zo_hess_yy_apply`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidParameterError, NumericError, RngStream, check_vector
from .oracle import StochasticScalarOracle


@dataclass
class GradEstimate:
    """Averaged estimate with its sample and evaluation counts.

    ``value`` is a vector for gradient estimators and a matrix for Hessian
    estimators.
    """

    value: np.ndarray
    samples_used: int
    evals_consumed: int


def _check_batch(n_samples):
    n_samples = int(n_samples)
    if n_samples < 1:
        raise InvalidParameterError(f"batch size must be >= 1, got {n_samples}")
    return n_samples


def _check_radius(value, name, *, allow_zero):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidParameterError(f"{name} must be finite and {bound}, got {value}")
    return value


def _draw(Q, stream, N, eta, mu):
    U = stream.normal((N, Q.n)) if eta > 0 else None
    V = stream.normal((N, Q.m)) if mu > 0 else None
    noise = Q.sample_noise(stream, N)
    return U, V, noise


def _shift(base, radius, D, N):
    if D is None:
        return np.broadcast_to(base, (N, base.size))
    return base + radius * D


def _call(Q, X, Y, noise, groups, N):
    try:
        return Q(X, Y, np.concatenate([noise] * groups))
    except NumericError as exc:
        idx = None if exc.index is None else exc.index % N
        raise NumericError(f"non-finite oracle value in batch sample {idx}", index=idx, tag="estimator") from exc


def _forward_scalars(Q, x, y, eta, mu, U, V, noise):
    """Per-sample ``Q(x + eta u, y + mu v) - Q(x, y)`` with shared noise."""
    N = noise.shape[0]
    X = np.concatenate([_shift(x, eta, U, N), np.broadcast_to(x, (N, x.size))])
    Y = np.concatenate([_shift(y, mu, V, N), np.broadcast_to(y, (N, y.size))])
    vals = _call(Q, X, Y, noise, 2, N)
    return vals[:N] - vals[N:]


def _central_scalars(Q, x, y, eta, mu, U, V, noise):
    """Per-sample ``Q(x + eta u, y + mu v) + Q(x - eta u, y - mu v) - 2 Q(x, y)``."""
    N = noise.shape[0]
    X = np.concatenate([_shift(x, eta, U, N), _shift(x, -eta, U, N), np.broadcast_to(x, (N, x.size))])
    Y = np.concatenate([_shift(y, mu, V, N), _shift(y, -mu, V, N), np.broadcast_to(y, (N, y.size))])
    vals = _call(Q, X, Y, noise, 3, N)
    return vals[:N] + vals[N : 2 * N] - 2.0 * vals[2 * N :]


def grad_x_samples(Q, x, y, eta, mu, n_samples, stream):
    """Per-sample terms of :func:`zo_grad_x`, shape ``(N, n)``."""
    eta = _check_radius(eta, "eta", allow_zero=False)
    mu = _check_radius(mu, "mu", allow_zero=True)
    N = _check_batch(n_samples)
    x, y = check_vector(x, Q.n, "x"), check_vector(y, Q.m, "y")
    U, V, noise = _draw(Q, stream, N, eta, mu)
    d = _forward_scalars(Q, x, y, eta, mu, U, V, noise) / eta
    return d[:, None] * U


def grad_y_samples(Q, x, y, eta, mu, n_samples, stream):
    """Per-sample terms of :func:`zo_grad_y`, shape ``(N, m)``."""
    eta = _check_radius(eta, "eta", allow_zero=True)
    mu = _check_radius(mu, "mu", allow_zero=False)
    N = _check_batch(n_samples)
    x, y = check_vector(x, Q.n, "x"), check_vector(y, Q.m, "y")
    U, V, noise = _draw(Q, stream, N, eta, mu)
    d = _forward_scalars(Q, x, y, eta, mu, U, V, noise) / mu
    return d[:, None] * V


def hess_xy_samples(Q, x, y, eta, mu, n_samples, stream):
    """Per-sample terms of :func:`zo_hess_xy`, shape ``(N, n, m)``."""
    U, V, c = _hess_xy_factors(Q, x, y, eta, mu, n_samples, stream)
    return c[:, None, None] * U[:, :, None] * V[:, None, :]


def hess_xx_samples(Q, x, y, eta, mu, n_samples, stream):
    """Per-sample terms of :func:`zo_hess_xx`, shape ``(N, n, n)``."""
    U, c = _hess_xx_factors(Q, x, y, eta, mu, n_samples, stream)
    outer = U[:, :, None] * U[:, None, :] - np.eye(Q.n)[None]
    return c[:, None, None] * outer


def _hess_xy_factors(Q, x, y, eta, mu, n_samples, stream):
    eta = _check_radius(eta, "eta", allow_zero=False)
    mu = _check_radius(mu, "mu", allow_zero=False)
    N = _check_batch(n_samples)
    x, y = check_vector(x, Q.n, "x"), check_vector(y, Q.m, "y")
    U, V, noise = _draw(Q, stream, N, eta, mu)
    c = _central_scalars(Q, x, y, eta, mu, U, V, noise) / (2.0 * eta * mu)
    return U, V, c


def _hess_xx_factors(Q, x, y, eta, mu, n_samples, stream):
    eta = _check_radius(eta, "eta", allow_zero=False)
    mu = _check_radius(mu, "mu", allow_zero=True)
    N = _check_batch(n_samples)
    x, y = check_vector(x, Q.n, "x"), check_vector(y, Q.m, "y")
    U, V, noise = _draw(Q, stream, N, eta, mu)
    c = _central_scalars(Q, x, y, eta, mu, U, V, noise) / (2.0 * eta * eta)
    return U, c


def zo_grad_x(Q: StochasticScalarOracle, x, y, eta: float, mu: float, n_samples: int, stream: RngStream) -> GradEstimate:
    """Forward-difference estimate of the x-gradient of the smoothed function.

    Averages ``[Q(x + eta u, y + mu v, z) - Q(x, y, z)] / eta * u`` over
    ``n_samples`` draws. ``mu = 0`` leaves y unperturbed and draws no v.
    """
    samples = grad_x_samples(Q, x, y, eta, mu, n_samples, stream)
    N = samples.shape[0]
    return GradEstimate(samples.mean(axis=0), N, 2 * N)


def zo_grad_y(Q: StochasticScalarOracle, x, y, eta: float, mu: float, n_samples: int, stream: RngStream) -> GradEstimate:
    """Forward-difference estimate of the y-gradient; ``eta = 0`` keeps x fixed."""
    samples = grad_y_samples(Q, x, y, eta, mu, n_samples, stream)
    N = samples.shape[0]
    return GradEstimate(samples.mean(axis=0), N, 2 * N)


def zo_hess_xy(Q: StochasticScalarOracle, x, y, eta: float, mu: float, n_samples: int, stream: RngStream) -> GradEstimate:
    """Central-difference estimate of the mixed ``n x m`` Hessian block."""
    U, V, c = _hess_xy_factors(Q, x, y, eta, mu, n_samples, stream)
    N = c.size
    return GradEstimate((U * c[:, None]).T @ V / N, N, 3 * N)


def zo_hess_xx(Q: StochasticScalarOracle, x, y, eta: float, mu: float, n_samples: int, stream: RngStream) -> GradEstimate:
    """Central-difference estimate of the ``n x n`` Hessian block in x.

    Not used by the solvers; kept for validation of the moment bounds.
    """
    U, c = _hess_xx_factors(Q, x, y, eta, mu, n_samples, stream)
    N = c.size
    value = ((U * c[:, None]).T @ U - c.sum() * np.eye(Q.n)) / N
    return GradEstimate(value, N, 3 * N)


def hess_yy_apply_drawn(Q, x, y, eta2, mu2, z, u, v, noise):
    """``(v v^T - I) s z`` for pre-drawn ``u``, ``v`` and one noise sample.

    ``s`` is the central difference of ``Q`` along ``(eta2 u, mu2 v)`` divided
    by ``2 mu2^2``. ``u`` may be ``None`` when ``eta2 = 0``.
    """
    U = None if u is None else u[None, :]
    s = _central_scalars(Q, x, y, eta2, mu2, U, v[None, :], noise[None, ...])[0] / (2.0 * mu2 * mu2)
    return v * (s * float(v @ z)) - s * z


def zo_hess_yy_apply(
    Q: StochasticScalarOracle, x, y, mu2: float, z, stream: RngStream, eta2: float = 0.0
) -> GradEstimate:
    """Single-sample product of the y-block Hessian estimate with ``z``.

    Evaluates ``Q`` at ``(x +- eta2 u, y +- mu2 v)`` and ``(x, y)`` and never
    forms the ``m x m`` matrix.
    """
    mu2 = _check_radius(mu2, "mu2", allow_zero=False)
    eta2 = _check_radius(eta2, "eta2", allow_zero=True)
    x, y = check_vector(x, Q.n, "x"), check_vector(y, Q.m, "y")
    z = check_vector(z, Q.m, "z")
    U, V, noise = _draw(Q, stream, 1, eta2, mu2)
    u = None if U is None else U[0]
    value = hess_yy_apply_drawn(Q, x, y, eta2, mu2, z, u, V[0], noise[0])
    return GradEstimate(value, 1, 3)


def hess_yy_apply_samples(Q, x, y, eta2, mu2, z, n_samples, stream):
    """Per-sample terms of :func:`zo_hess_yy_apply`, shape ``(N, m)``; ``3N`` evaluations."""
    mu2 = _check_radius(mu2, "mu2", allow_zero=False)
    eta2 = _check_radius(eta2, "eta2", allow_zero=True)
    N = _check_batch(n_samples)
    x, y = check_vector(x, Q.n, "x"), check_vector(y, Q.m, "y")
    z = check_vector(z, Q.m, "z")
    U, V, noise = _draw(Q, stream, N, eta2, mu2)
    s = _central_scalars(Q, x, y, eta2, mu2, U, V, noise) / (2.0 * mu2 * mu2)
    return V * (s * (V @ z))[:, None] - s[:, None] * z[None, :]
