"""Zeroth-order approximation of the Hessian-inverse-vector product.

Runs biased SGD on ``J(z) = 1/2 z^T H z - b^T z`` where ``H`` is the y-block
Hessian of the smoothed lower function and ``b`` the y-gradient of the
smoothed upper function, both at a fixed ``(xbar, ybar)``. The fixed point is
``H^{-1} b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    InvalidParameterError,
    ProblemConstants,
    RngStream,
    SmoothingParams,
    check_diverged,
    check_vector,
    divergence_limit_sq,
)


@dataclass(frozen=True)
class HessInvConfig:
    """Step size, iteration count, smoothing radii and start point of the SGD loop.

    Only ``eta2``, ``mu1`` and ``mu2`` of ``smoothing`` are used. ``z0=None``
    starts from the zero vector.
    """

    beta: float
    T: int
    smoothing: SmoothingParams
    z0: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise InvalidParameterError(f"beta must be finite and non-negative, got {self.beta}")
        if int(self.T) < 1:
            raise InvalidParameterError(f"T must be >= 1, got {self.T}")
        object.__setattr__(self, "T", int(self.T))


class _Workspace:
    """Row buffers reused across iterations at a fixed ``(xbar, ybar)``."""

    def __init__(self, xbar, ybar):
        self.XG = np.tile(xbar, (3, 1))
        self.YG = np.tile(ybar, (3, 1))
        self.XF = np.tile(xbar, (2, 1))
        self.YF = np.tile(ybar, (2, 1))


def _draws(F, G, stream, T, eta2):
    U = stream.normal((T, G.n)) if eta2 > 0 else None
    V = stream.normal((T, G.m))
    Vp = stream.normal((T, F.m))
    g_noise = G.sample_noise(stream, T)
    f_noise = F.sample_noise(stream, T)
    g_noise = np.repeat(g_noise[:, None, ...], 3, axis=1)
    f_noise = np.repeat(f_noise[:, None, ...], 2, axis=1)
    return U, V, Vp, g_noise, f_noise


def _grad_J(F, G, ws, xbar, ybar, z, eta2, mu1, mu2, u, v, vp, g_noise, f_noise):
    if u is not None:
        ws.XG[0] = xbar + eta2 * u
        ws.XG[1] = xbar - eta2 * u
    ws.YG[0] = ybar + mu2 * v
    ws.YG[1] = ybar - mu2 * v
    gv = G(ws.XG, ws.YG, g_noise)
    s = (gv[0] + gv[1] - 2.0 * gv[2]) / (2.0 * mu2 * mu2)
    ws.YF[0] = ybar + mu1 * vp
    fv = F(ws.XF, ws.YF, f_noise)
    d = (fv[0] - fv[1]) / mu1
    return v * (s * float(v @ z)) - s * z - d * vp


def grad_J_sample(F, G, xbar, ybar, z, params: SmoothingParams, stream: RngStream) -> np.ndarray:
    """One stochastic gradient of ``J`` at ``z``: 3 evaluations of G, 2 of F."""
    xbar, ybar = check_vector(xbar, G.n, "xbar"), check_vector(ybar, G.m, "ybar")
    z = check_vector(z, G.m, "z")
    U, V, Vp, g_noise, f_noise = _draws(F, G, stream, 1, params.eta2)
    u = None if U is None else U[0]
    ws = _Workspace(xbar, ybar)
    return _grad_J(F, G, ws, xbar, ybar, z, params.eta2, params.mu1, params.mu2, u, V[0], Vp[0], g_noise[0], f_noise[0])


def _difference_scalars(F, G, xbar, ybar, sm, U, V, Vp, g_noise, f_noise):
    """Curvature scalars ``s`` and upper slopes ``d`` for a block of steps.

    Neither depends on the iterate, so a block of steps needs just one batched
    call per oracle.
    """
    from .smoothing import _central_scalars, _forward_scalars

    s = _central_scalars(G, xbar, ybar, sm.eta2, sm.mu2, U, V, g_noise) / (2.0 * sm.mu2 * sm.mu2)
    d = _forward_scalars(F, xbar, ybar, 0.0, sm.mu1, None, Vp, f_noise) / sm.mu1
    return s, d


def approx_hess_inv_vec(F, G, xbar, ybar, cfg: HessInvConfig, stream: RngStream, block: int = 4096) -> np.ndarray:
    """Return ``z_T`` after ``cfg.T`` SGD steps ``z <- z - beta * grad_J(z)``.

    Consumes ``3 T`` evaluations of G and ``2 T`` of F. Oracle values do not
    depend on ``z``; they are computed ``block`` steps at a time.

    Raises
    ------
    DivergenceError
        If ``||z||`` exceeds ``1e6 * (1 + ||z0||)``.
    """
    xbar, ybar = check_vector(xbar, G.n, "xbar"), check_vector(ybar, G.m, "ybar")
    z = np.zeros(G.m) if cfg.z0 is None else check_vector(cfg.z0, G.m, "z0").copy()
    sm = cfg.smoothing
    limit = divergence_limit_sq(z)
    T = cfg.T
    U = stream.normal((T, G.n)) if sm.eta2 > 0 else None
    V = stream.normal((T, G.m))
    Vp = stream.normal((T, F.m))
    g_noise = G.sample_noise(stream, T)
    f_noise = F.sample_noise(stream, T)
    beta = cfg.beta
    for lo in range(0, T, block):
        hi = min(lo + block, T)
        s, d = _difference_scalars(
            F, G, xbar, ybar, sm, None if U is None else U[lo:hi], V[lo:hi], Vp[lo:hi], g_noise[lo:hi], f_noise[lo:hi]
        )
        keep = (1.0 + beta * s).tolist()
        bs, bd = (beta * s).tolist(), (beta * d).tolist()
        Vb, Vpb = V[lo:hi], Vp[lo:hi]
        for j in range(hi - lo):
            v = Vb[j]
            z = keep[j] * z - (bs[j] * (v @ z)) * v + bd[j] * Vpb[j]
            # divergence guard every 64 steps and at the end of each block
            if j & 63 == 63 and not float(z @ z) <= limit:
                check_diverged(z, limit, index=lo + j, tag="hessinv")
        if not float(z @ z) <= limit:
            check_diverged(z, limit, index=hi - 1, tag="hessinv")
    return z


def hessinv_schedule(
    m: int,
    n: int,
    eps: float,
    consts: ProblemConstants | None = None,
    *,
    c_gamma: float = 1.0,
    c_T: float = 1.0,
    c_mu: float = 1.0,
    T_cap: int | None = None,
    rescale_on_cap: bool = True,
) -> HessInvConfig:
    """Plug-in schedule for :func:`approx_hess_inv_vec`.

    ``beta = c_gamma * eps / (m (m+n)^2)``,
    ``T = ceil(c_T * m (m+n)^2 / eps * log(1/eps))``,
    ``mu1 = min(c_mu, 1/m)`` and ``eta2 = mu2 = min(c_mu, 1/sqrt(m+n))``.

    When ``T_cap`` truncates ``T`` and ``rescale_on_cap`` is set, ``beta`` is
    scaled up so that ``beta * T`` is unchanged. ``consts`` is accepted for
    signature symmetry with the solver schedules; the formulas do not use it.
    """
    if not 0 < eps < 1:
        raise InvalidParameterError(f"eps must lie in (0, 1), got {eps}")
    m, n = int(m), int(n)
    scale = m * (m + n) ** 2
    beta = c_gamma * eps / scale
    T = max(1, math.ceil(c_T * scale / eps * math.log(1.0 / eps)))
    if T_cap is not None and T > T_cap:
        if rescale_on_cap:
            beta *= T / T_cap
        T = int(T_cap)
    mu1 = min(c_mu, 1.0 / m)
    eta2 = mu2 = min(c_mu, 1.0 / math.sqrt(m + n))
    smoothing = SmoothingParams(eta1=mu1, mu1=mu1, eta2=eta2, mu2=mu2)
    return HessInvConfig(beta=beta, T=T, smoothing=smoothing)
