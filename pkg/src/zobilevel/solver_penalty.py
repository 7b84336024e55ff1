"""Penalty-based fully zeroth-order bilevel method.

The surrogate ``L(x, y) = f(x, y) + lam * (g(x, y) - min_z g(x, z))`` has
gradient ``grad_x f(x, y*) + lam * (grad_x g(x, y*) - grad_x g(x, z*))`` at the
minimizers ``y*`` of ``f/lam + g`` and ``z*`` of ``g``. The inner loop tracks
both minimizers with paired SGD steps that share every random draw, so the
noise largely cancels in ``y - z``; the outer loop only needs first-order
zeroth-order estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigError,
    InvalidParameterError,
    ProblemConstants,
    RngStream,
    SmoothingParams,
    check_diverged,
    check_vector,
    divergence_limit_sq,
)
from .projection import ProjectionSpec, prox_step
from .solver_jh import _alpha_at, _check_alpha, _resolve_stream, _start_point, run_outer_loop
from .trace import ConvergenceTrace

OUTER_FORMS = ("surrogate", "displayed")
INNER_F_POINTS = ("y", "z")


@dataclass(frozen=True)
class PenaltyConfig:
    """Hyperparameters of one penalty-method run.

    Attributes
    ----------
    n_outer : int
    alpha : float or sequence of float
    beta : float
        Inner step size shared by the ``y`` and ``z`` sequences.
    t_k, s_k : int
        Inner steps and outer minibatch size.
    lam : float
        Penalty weight; ``inf`` switches the upper term off in the inner loop.
    smoothing : SmoothingParams
        ``eta1`` is the x-radius and ``mu1`` the y-radius.
    projection : ProjectionSpec
    log_stride : int
    warm_start : bool
        Start each inner loop at the previous ``(ybar, zbar)``.
    inner_f_point : {"y", "z"}
        Where the inner upper-level difference is evaluated.
    outer_form : {"surrogate", "displayed"}
        ``"surrogate"`` estimates ``grad_x F(ybar) + lam (grad_x G(ybar) -
        grad_x G(zbar))``; ``"displayed"`` uses ``grad_x F(zbar) +
        lam (grad_x G(zbar) - grad_x G(ybar))``.
    """

    n_outer: int
    alpha: float | tuple
    beta: float
    t_k: int
    s_k: int
    lam: float
    smoothing: SmoothingParams
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    log_stride: int = 1
    warm_start: bool = True
    inner_f_point: str = "y"
    outer_form: str = "surrogate"

    def __post_init__(self):
        if int(self.n_outer) < 0:
            raise InvalidParameterError("n_outer must be >= 0")
        object.__setattr__(self, "n_outer", int(self.n_outer))
        for name in ("t_k", "s_k", "log_stride"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        if np.ndim(self.alpha) > 0:
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        _check_alpha(self.alpha, self.n_outer)
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise InvalidParameterError("beta must be finite and non-negative")
        if not self.lam > 0:
            raise InvalidParameterError("lam must be positive")
        if self.inner_f_point not in INNER_F_POINTS:
            raise InvalidParameterError(f"inner_f_point must be one of {INNER_F_POINTS}")
        if self.outer_form not in OUTER_FORMS:
            raise InvalidParameterError(f"outer_form must be one of {OUTER_FORMS}")

    def alphas(self) -> np.ndarray:
        return np.array([_alpha_at(self.alpha, k) for k in range(self.n_outer)])

    def queries_per_outer(self) -> tuple[int, int]:
        """``(F, G)`` evaluations of one outer iteration."""
        return 2 * self.t_k + 2 * self.s_k, 4 * self.t_k + 4 * self.s_k


@dataclass
class InnerPairState:
    """Iterates ``y`` (tracks the penalized minimizer) and ``z`` (tracks the lower minimizer)."""

    y: np.ndarray
    z: np.ndarray

    @property
    def q(self) -> np.ndarray:
        return self.y - self.z


class _InnerDraws:
    """Pre-drawn directions and noise for ``count`` inner steps."""

    def __init__(self, F, G, stream, count):
        self.V = stream.normal((count, G.m))
        self.g_noise = np.repeat(G.sample_noise(stream, count)[:, None, ...], 4, axis=1)
        self.f_noise = np.repeat(F.sample_noise(stream, count)[:, None, ...], 2, axis=1)


def _inner_update(F, G, XG, XF, YG, YF, y, z, v, g_noise, f_noise, beta, inv_lam, mu, f_at_z):
    YG[0] = y + mu * v
    YG[1] = y
    YG[2] = z + mu * v
    YG[3] = z
    gv = G(XG, YG, g_noise)
    base = z if f_at_z else y
    YF[0] = base + mu * v
    YF[1] = base
    fv = F(XF, YF, f_noise)
    gy = (gv[0] - gv[1]) / mu
    gz = (gv[2] - gv[3]) / mu
    fy = (fv[0] - fv[1]) / mu
    z_new = z - (beta * gz) * v
    y_new = y - (beta * (inv_lam * fy + gy)) * v
    return y_new, z_new


def _run_inner(F, G, x_k, y, z, beta, t_k, lam, mu, stream, f_at_z=False):
    draws = _InnerDraws(F, G, stream, t_k)
    XG = np.tile(x_k, (4, 1))
    XF = np.tile(x_k, (2, 1))
    YG = np.empty((4, G.m))
    YF = np.empty((2, G.m))
    inv_lam = 0.0 if math.isinf(lam) else 1.0 / lam
    limit = max(divergence_limit_sq(y), divergence_limit_sq(z))
    for t in range(t_k):
        y, z = _inner_update(
            F, G, XG, XF, YG, YF, y, z, draws.V[t], draws.g_noise[t], draws.f_noise[t], beta, inv_lam, mu, f_at_z
        )
        check_diverged(y, limit, index=t, tag="inner_y")
        check_diverged(z, limit, index=t, tag="inner_z")
    return y, z


def inner_step_pair(F, G, x_k, state: InnerPairState, beta: float, lam: float, mu: float, stream: RngStream, *, f_at_z=False) -> InnerPairState:
    """One paired inner step; 4 evaluations of G and 2 of F.

    One direction ``v`` and one lower-level noise sample serve both
    y-differences of G. The F-difference reuses ``v`` with its own noise.
    """
    if not beta > 0:
        raise InvalidParameterError("beta must be > 0")
    if not mu > 0:
        raise InvalidParameterError("mu must be > 0")
    x_k = check_vector(x_k, G.n, "x_k")
    y = check_vector(state.y, G.m, "y")
    z = check_vector(state.z, G.m, "z")
    y, z = _run_inner(F, G, x_k, y, z, beta, 1, lam, mu, stream, f_at_z)
    return InnerPairState(y, z)


def inner_loop_pair(F, G, x_k, state: InnerPairState, beta: float, t_k: int, lam: float, mu: float, stream: RngStream, *, f_at_z=False) -> InnerPairState:
    """``t_k`` paired inner steps drawn from one stream; ``6 t_k`` evaluations."""
    if int(t_k) < 1:
        raise InvalidParameterError("t_k must be >= 1")
    x_k = check_vector(x_k, G.n, "x_k")
    y = check_vector(state.y, G.m, "y")
    z = check_vector(state.z, G.m, "z")
    y, z = _run_inner(F, G, x_k, y, z, beta, int(t_k), lam, mu, stream, f_at_z)
    return InnerPairState(y, z)


def penalty_grad_estimate(F, G, x_k, ybar_k, zbar_k, eta, lam, s_k, stream, outer_form="surrogate") -> np.ndarray:
    """Minibatch estimate of the surrogate gradient; ``2 s_k`` F- and ``4 s_k`` G-evaluations.

    Each sample draws one ``u`` shared by all three differences and one
    lower-level noise sample shared by the two G-differences.
    """
    n = G.n
    s_k = int(s_k)
    if s_k < 1:
        raise InvalidParameterError("s_k must be >= 1")
    U = stream.normal((s_k, n))
    g_noise = G.sample_noise(stream, s_k)
    f_noise = F.sample_noise(stream, s_k)
    y_f, y_plus, y_minus = (ybar_k, ybar_k, zbar_k) if outer_form == "surrogate" else (zbar_k, zbar_k, ybar_k)

    Xs = x_k + eta * U
    Xb = np.broadcast_to(x_k, (s_k, n))

    def rows(y):
        return np.broadcast_to(y, (s_k, y.size))

    fv = F(np.concatenate([Xs, Xb]), np.concatenate([rows(y_f), rows(y_f)]), np.concatenate([f_noise, f_noise]))
    gv = G(
        np.concatenate([Xs, Xb, Xs, Xb]),
        np.concatenate([rows(y_plus), rows(y_plus), rows(y_minus), rows(y_minus)]),
        np.concatenate([g_noise] * 4),
    )
    df = (fv[:s_k] - fv[s_k:]) / eta
    dg = ((gv[:s_k] - gv[s_k : 2 * s_k]) - (gv[2 * s_k : 3 * s_k] - gv[3 * s_k :])) / eta
    return (df + lam * dg) @ U / s_k


def outer_step_penalty(F, G, x_k, ybar_k, zbar_k, cfg: PenaltyConfig, stream: RngStream, k: int = 0):
    """One prox step on the surrogate; returns ``(x_{k+1}, surrogate_grad)``."""
    x_k = check_vector(x_k, F.n, "x_k")
    ybar_k = check_vector(ybar_k, F.m, "ybar_k")
    zbar_k = check_vector(zbar_k, F.m, "zbar_k")
    d = penalty_grad_estimate(F, G, x_k, ybar_k, zbar_k, cfg.smoothing.eta1, cfg.lam, cfg.s_k, stream, cfg.outer_form)
    return prox_step(x_k, d, _alpha_at(cfg.alpha, k), cfg.projection), d


def run_penalty(
    problem,
    cfg: PenaltyConfig,
    root_seed,
    *,
    x0=None,
    y0=None,
    z0=None,
    budget: int | None = None,
    stop_norm: float | None = None,
) -> ConvergenceTrace:
    """Run the penalty method on ``problem``.

    Same contract as :func:`~zobilevel.solver_jh.run_jh`. ``z0`` defaults to
    ``y0``. ``trace.y_final`` holds the final :class:`InnerPairState`.
    """
    stream = _resolve_stream(root_seed)
    x0, y0 = _start_point(problem, stream, x0, y0)
    z0 = y0.copy() if z0 is None else check_vector(z0, problem.m, "z0").copy()
    F, G = problem.oracle_F, problem.oracle_G
    start_pair = InnerPairState(y0, z0)
    f_at_z = cfg.inner_f_point == "z"

    def step(k, x, pair, sk):
        init = pair if cfg.warm_start else start_pair
        y, z = _run_inner(F, G, x, init.y, init.z, cfg.beta, cfg.t_k, cfg.lam, cfg.smoothing.mu1, sk.derive("inner", 0), f_at_z)
        x_next, d = outer_step_penalty(F, G, x, y, z, cfg, sk.derive("grad", 0), k)
        return x_next, d, InnerPairState(y, z)

    return run_outer_loop(
        problem,
        cfg.n_outer,
        step,
        stream,
        alphas=cfg.alphas(),
        log_stride=cfg.log_stride,
        x0=x0,
        y0=start_pair,
        budget=budget,
        stop_norm=stop_norm,
    )


def penalty_lambda_threshold(consts: ProblemConstants) -> float:
    """Smallest admissible penalty ``4 L_{1,f} / lambda_g``."""
    return 4.0 * consts.l1f / consts.lam_g


def penalty_schedule(
    n: int,
    m: int,
    eps: float,
    consts: ProblemConstants | None = None,
    *,
    n_outer: int | None = None,
    lam: float | None = None,
    c_alpha: float = 1.0,
    c_beta: float = 1.0,
    c_lam: float = 1.0,
    c_s: float = 1.0,
    c_t: float = 1.0,
    c_eta: float = 1.0,
    c_mu: float = 1.0,
    c_n: float = 1.0,
    t_cap: int | None = None,
    s_cap: int | None = None,
    rescale_on_cap: bool = True,
    default_alpha: float = 0.01,
    smoothing: SmoothingParams | None = None,
) -> PenaltyConfig:
    """Plug-in schedule for :func:`run_penalty`.

    ``lam = max(4 L_{1,f}/lambda_g, c_lam / sqrt(eps))`` (threshold dropped
    when ``consts`` is None), ``s = ceil(c_s n/eps)``, ``t = ceil(c_t m/eps)``,
    ``beta = c_beta eps/m``, ``alpha = c_alpha/(5 L_psi)``,
    ``eta = c_eta sqrt(min(1/(lam^2 n^3), eps/n^3))``,
    ``mu = c_mu sqrt(eps/m^3)`` and ``N = ceil(c_n/eps)``.

    Raises
    ------
    ConfigError
        If an explicit ``lam`` is below ``4 L_{1,f}/lambda_g``.
    """
    if not 0 < eps < 1:
        raise InvalidParameterError(f"eps must lie in (0, 1), got {eps}")
    n, m = int(n), int(m)
    floor = 0.0 if consts is None else penalty_lambda_threshold(consts)
    if lam is None:
        lam = max(floor, c_lam / math.sqrt(eps))
    elif lam < floor:
        raise ConfigError(f"lam = {lam} is below the admissible threshold {floor}")
    s_k = math.ceil(c_s * n / eps - 1e-9)
    t_k = math.ceil(c_t * m / eps - 1e-9)
    beta = c_beta * eps / m
    if t_cap is not None and t_k > t_cap:
        if rescale_on_cap:
            beta *= t_k / t_cap
        t_k = int(t_cap)
    if s_cap is not None:
        s_k = min(s_k, int(s_cap))
    if smoothing is None:
        eta = c_eta * math.sqrt(min(1.0 / (lam**2 * n**3), eps / n**3))
        mu = c_mu * math.sqrt(eps / m**3)
        smoothing = SmoothingParams(eta1=eta, mu1=mu, eta2=eta, mu2=mu)
    alpha = default_alpha if consts is None else c_alpha / (5.0 * consts.l1psi)
    N = math.ceil(c_n / eps) if n_outer is None else int(n_outer)
    return PenaltyConfig(n_outer=N, alpha=alpha, beta=beta, t_k=t_k, s_k=s_k, lam=lam, smoothing=smoothing)
