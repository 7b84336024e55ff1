"""Double-loop zeroth-order bilevel method built on a Hessian-inverse approximation.

Each outer iteration runs ``t_k`` zeroth-order SGD steps on the lower problem,
then assembles the hypergradient estimate

    grad_x F(x_k, ybar) - H_xy(x_k, ybar) @ z_k,

where ``z_k`` approximates ``H_yy^{-1} grad_y F`` via
:func:`~zobilevel.hessinv.approx_hess_inv_vec`, and takes a prox step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ConfigError,
    InvalidParameterError,
    NumericError,
    ProblemConstants,
    RngStream,
    SmoothingParams,
    check_diverged,
    check_vector,
    divergence_limit_sq,
)
from .hessinv import HessInvConfig, approx_hess_inv_vec, hessinv_schedule
from .projection import ProjectionSpec, prox_step
from .smoothing import zo_grad_x, zo_hess_xy
from .trace import ConvergenceTrace, TraceRecord, sample_output_index


def _alpha_at(alpha, k: int) -> float:
    if np.ndim(alpha) == 0:
        return float(alpha)
    return float(alpha[k])


def _check_alpha(alpha, n_outer):
    if np.ndim(alpha) == 0:
        vals = np.array([float(alpha)])
    else:
        vals = np.asarray(alpha, dtype=float)
        if vals.size < n_outer:
            raise InvalidParameterError(f"alpha schedule has {vals.size} entries, need {n_outer}")
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidParameterError("step sizes alpha_k must be finite and positive")


@dataclass(frozen=True)
class JHConfig:
    """Hyperparameters of one double-loop run.

    Attributes
    ----------
    n_outer : int
        Outer iterations ``N``; ``0`` only records the start point.
    alpha : float or sequence of float
        Outer step size, constant or one value per outer iteration.
    beta : float
        Inner SGD step on the lower problem.
    t_k, s_k, b_k : int
        Inner steps, outer minibatch size and Hessian-inverse SGD steps.
    smoothing : SmoothingParams
    hessinv_beta : float
        Step size of the Hessian-inverse SGD loop.
    projection : ProjectionSpec
    log_stride : int
        Log the true hypergradient norm every ``log_stride`` outer iterations
        (the first and last iterates are always logged).
    warm_start : bool
        Start each inner loop at the previous ``ybar``; otherwise at ``y0``.
    """

    n_outer: int
    alpha: float | tuple
    beta: float
    t_k: int
    s_k: int
    b_k: int
    smoothing: SmoothingParams
    hessinv_beta: float
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    log_stride: int = 1
    warm_start: bool = True

    def __post_init__(self):
        if int(self.n_outer) < 0:
            raise InvalidParameterError("n_outer must be >= 0")
        for name in ("t_k", "s_k", "b_k", "log_stride"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        object.__setattr__(self, "n_outer", int(self.n_outer))
        if np.ndim(self.alpha) > 0:
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        _check_alpha(self.alpha, self.n_outer)
        for name in ("beta", "hessinv_beta"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v >= 0):
                raise InvalidParameterError(f"{name} must be finite and non-negative")

    def hessinv_config(self) -> HessInvConfig:
        return HessInvConfig(beta=self.hessinv_beta, T=self.b_k, smoothing=self.smoothing)

    def alphas(self) -> np.ndarray:
        return np.array([_alpha_at(self.alpha, k) for k in range(self.n_outer)])

    def queries_per_outer(self) -> tuple[int, int]:
        """``(F, G)`` evaluations of one outer iteration."""
        return 2 * self.s_k + 2 * self.b_k, 2 * self.t_k + 3 * self.s_k + 3 * self.b_k


def inner_loop_y(G, x_k, y_init, beta: float, t_k: int, mu2: float, stream: RngStream) -> np.ndarray:
    """``t_k`` SGD steps ``y <- y - beta * g`` with one-sample forward differences in y.

    Uses ``2 t_k`` evaluations of ``G``; x is never perturbed.
    """
    t_k = int(t_k)
    if t_k < 1:
        raise InvalidParameterError("t_k must be >= 1")
    if not mu2 > 0:
        raise InvalidParameterError("mu2 must be > 0")
    x_k = check_vector(x_k, G.n, "x")
    y = check_vector(y_init, G.m, "y_init").copy()
    V = stream.normal((t_k, G.m))
    noise = G.sample_noise(stream, t_k)
    noise = np.repeat(noise[:, None, ...], 2, axis=1)
    X = np.tile(x_k, (2, 1))
    Y = np.empty((2, G.m))
    limit = divergence_limit_sq(y)
    for t in range(t_k):
        v = V[t]
        Y[0] = y + mu2 * v
        Y[1] = y
        gv = G(X, Y, noise[t])
        y = y - (beta * (gv[0] - gv[1]) / mu2) * v
        check_diverged(y, limit, index=t, tag="inner")
    return y


def jh_hypergrad_estimate(F, G, x_k, ybar_k, cfg: JHConfig, stream: RngStream) -> np.ndarray:
    """Assembled hypergradient estimate at ``(x_k, ybar_k)``."""
    sm = cfg.smoothing
    gx = zo_grad_x(F, x_k, ybar_k, sm.eta1, 0.0, cfg.s_k, stream.derive("grad_x", 0)).value
    hxy = zo_hess_xy(G, x_k, ybar_k, sm.eta2, sm.mu2, cfg.s_k, stream.derive("hess_xy", 0)).value
    z = approx_hess_inv_vec(F, G, x_k, ybar_k, cfg.hessinv_config(), stream.derive("hessinv", 0))
    return gx - hxy @ z


def outer_step_jh(F, G, x_k, ybar_k, cfg: JHConfig, stream: RngStream, k: int = 0):
    """One outer update; returns ``(x_{k+1}, surrogate_grad)``.

    Uses ``2 s_k + 2 b_k`` evaluations of F and ``3 s_k + 3 b_k`` of G.
    """
    x_k = check_vector(x_k, F.n, "x_k")
    ybar_k = check_vector(ybar_k, F.m, "ybar_k")
    d = jh_hypergrad_estimate(F, G, x_k, ybar_k, cfg, stream)
    return prox_step(x_k, d, _alpha_at(cfg.alpha, k), cfg.projection), d


def _hypergrad_norm(problem, x):
    if not problem.has_analytic:
        return None
    return float(np.linalg.norm(problem.hypergrad(x)))


def _resolve_stream(seed_or_stream) -> RngStream:
    if isinstance(seed_or_stream, RngStream):
        return seed_or_stream
    return RngStream(int(seed_or_stream))


def _start_point(problem, stream, x0, y0):
    xi, yi = problem.initial_point(stream.derive("init", 0))
    x = xi if x0 is None else check_vector(x0, problem.n, "x0").copy()
    y = yi if y0 is None else check_vector(y0, problem.m, "y0").copy()
    return x, y


def run_outer_loop(problem, n_outer, step, stream, *, alphas, log_stride, x0, y0, budget, stop_norm=None):
    """Shared driver: ``step(k, x, state, stream_k) -> (x_next, surrogate, state_next)``.

    ``state`` starts as ``y0``; the penalty solver passes its ``(y, z)`` pair.
    Stops early once the raw query total reaches ``budget`` or a logged
    hypergradient norm drops to ``stop_norm``.
    """
    trace = ConvergenceTrace()
    x, state = x0, y0
    iterates = [x0]
    start = problem.queries()
    trace.append(TraceRecord(0, 0, 0, _hypergrad_norm(problem, x), math.nan))
    completed = 0
    try:
        for k in range(n_outer):
            x_next, d, state = step(k, x, state, stream.derive("outer", k))
            check_diverged(x_next, divergence_limit_sq(x0), index=k, tag="outer")
            x = x_next
            iterates.append(x)
            completed = k + 1
            used = problem.queries() - start
            last = completed == n_outer or (budget is not None and used.total >= budget)
            norm = _hypergrad_norm(problem, x) if (completed % log_stride == 0 or last) else None
            if stop_norm is not None and norm is None and problem.has_analytic:
                norm = _hypergrad_norm(problem, x)
            trace.append(TraceRecord(completed, used.f_evals, used.g_evals, norm, float(np.linalg.norm(d))))
            if last or (stop_norm is not None and norm is not None and norm <= stop_norm):
                break
    except NumericError as exc:
        trace.x_final = x
        exc.trace = trace
        raise
    trace.x_final = x
    trace.y_final = state
    R = sample_output_index(alphas[:completed], stream.derive("output", 0))
    trace.chosen_index = R
    trace.x_output = None if R is None else iterates[R]
    return trace


def run_jh(
    problem, cfg: JHConfig, root_seed, *, x0=None, y0=None, budget: int | None = None, stop_norm: float | None = None
) -> ConvergenceTrace:
    """Run the double-loop method on ``problem``.

    Parameters
    ----------
    problem : BilevelProblem
    cfg : JHConfig
    root_seed : int or RngStream
        All randomness, including the start point, derives from it.
    x0, y0 : array_like, optional
        Override the random start point.
    budget : int, optional
        Stop after the outer iteration during which the raw query total
        reaches this value.
    stop_norm : float, optional
        Stop once the true hypergradient norm is at most this value.

    Returns
    -------
    ConvergenceTrace
        ``x_output`` holds the iterate ``x_R`` with ``P(R = k)`` proportional
        to ``alpha_k``.

    Raises
    ------
    NumericError
        On divergence or non-finite oracle output; the partial trace is
        attached as ``exc.trace``.
    """
    stream = _resolve_stream(root_seed)
    x0, y0 = _start_point(problem, stream, x0, y0)
    F, G = problem.oracle_F, problem.oracle_G

    def step(k, x, y, sk):
        y_start = y if cfg.warm_start else y0
        ybar = inner_loop_y(G, x, y_start, cfg.beta, cfg.t_k, cfg.smoothing.mu2, sk.derive("inner", 0))
        x_next, d = outer_step_jh(F, G, x, ybar, cfg, sk, k)
        return x_next, d, ybar

    return run_outer_loop(
        problem,
        cfg.n_outer,
        step,
        stream,
        alphas=cfg.alphas(),
        log_stride=cfg.log_stride,
        x0=x0,
        y0=y0,
        budget=budget,
        stop_norm=stop_norm,
    )


def jh_schedule(
    n: int,
    m: int,
    eps: float,
    consts: ProblemConstants | None = None,
    *,
    n_outer: int | None = None,
    c_alpha: float = 1.0,
    c_beta: float = 1.0,
    c_t: float = 1.0,
    c_s: float = 1.0,
    c_n: float = 1.0,
    hessinv_tuning: dict | None = None,
    t_cap: int | None = None,
    s_cap: int | None = None,
    b_cap: int | None = None,
    rescale_on_cap: bool = True,
    default_alpha: float = 0.01,
    smoothing: SmoothingParams | None = None,
) -> JHConfig:
    """Plug-in schedule for :func:`run_jh`.

    ``s_k = ceil(c_s * max(24 (n+2), sqrt(n m)) / eps)``,
    ``t_k = ceil(c_t * (m/eps) log(m/eps))``, ``beta = c_beta * eps / m``,
    ``alpha = c_alpha / (5 L_psi)`` (``default_alpha`` when ``L_psi`` is
    unknown), ``eta1 = mu1 = min(1/(n+m)^2, sqrt(eps/(n+m)^3))`` and
    ``eta2 = mu2 = min(1/(n+m), sqrt(eps/(n+m)))``. ``b_k`` and the
    Hessian-inverse step come from :func:`hessinv_schedule` with
    ``hessinv_tuning`` passed through, and ``N = ceil(c_n / eps)`` unless
    ``n_outer`` is given.

    Caps truncate ``t_k``, ``s_k`` and ``b_k``. With ``rescale_on_cap`` a
    capped loop length has its step size scaled so that step times length is
    preserved (``s_k`` has no step size and is simply truncated).
    ``smoothing`` replaces the plug-in radii, e.g. by fixed desk values.
    """
    if not 0 < eps < 1:
        raise InvalidParameterError(f"eps must lie in (0, 1), got {eps}")
    if consts is not None and not consts.l1psi > 0:
        raise ConfigError("consts.l1psi must be positive")
    n, m = int(n), int(m)
    s_k = math.ceil(c_s * max(24 * (n + 2), math.sqrt(n * m)) / eps)
    t_k = max(1, math.ceil(c_t * (m / eps) * math.log(m / eps)))
    beta = c_beta * eps / m
    if t_cap is not None and t_k > t_cap:
        if rescale_on_cap:
            beta *= t_k / t_cap
        t_k = int(t_cap)
    if s_cap is not None:
        s_k = min(s_k, int(s_cap))
    hcfg = hessinv_schedule(m, n, eps, consts, T_cap=b_cap, rescale_on_cap=rescale_on_cap, **(hessinv_tuning or {}))
    if smoothing is None:
        nm = n + m
        e1 = min(1.0 / nm**2, math.sqrt(eps / nm**3))
        e2 = min(1.0 / nm, math.sqrt(eps / nm))
        smoothing = SmoothingParams(eta1=e1, mu1=e1, eta2=e2, mu2=e2)
    alpha = default_alpha if consts is None else c_alpha / (5.0 * consts.l1psi)
    N = math.ceil(c_n / eps) if n_outer is None else int(n_outer)
    return JHConfig(
        n_outer=N,
        alpha=alpha,
        beta=beta,
        t_k=t_k,
        s_k=s_k,
        b_k=hcfg.T,
        smoothing=smoothing,
        hessinv_beta=hcfg.beta,
    )


def with_overrides(cfg, **kwargs):
    """Copy of a frozen config with fields replaced."""
    return replace(cfg, **kwargs)
