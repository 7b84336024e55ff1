import math

import numpy as np
import pytest

from zobilevel import (
    ConfigError,
    FunctionOracle,
    InnerPairState,
    InvalidParameterError,
    PenaltyConfig,
    ProblemConstants,
    QuadraticBilevelSpec,
    RngStream,
    SmoothingParams,
    inner_step_pair,
    make_quadratic,
    outer_step_penalty,
    penalty_schedule,
    run_penalty,
)
from zobilevel.solver_penalty import inner_loop_pair, penalty_grad_estimate, penalty_lambda_threshold

SM = SmoothingParams.uniform(1e-3)


def small_cfg(**kw):
    base = dict(n_outer=3, alpha=0.1, beta=0.05, t_k=7, s_k=5, lam=10.0, smoothing=SM)
    base.update(kw)
    return PenaltyConfig(**base)


def quad_problem(n=3, m=3, seed=0, **kw):
    return make_quadratic(QuadraticBilevelSpec.random(n, m, seed=seed, **kw))


def test_shared_noise_bitwise_when_penalty_off():
    P = quad_problem(4, 5, seed=1, noise_sigma_f=0.3, noise_sigma_g=0.3)
    y0 = RngStream(2).normal(5)
    s = inner_loop_pair(P.oracle_F, P.oracle_G, np.ones(4), InnerPairState(y0, y0.copy()), 0.05, 1000, math.inf, 1e-3, RngStream(3))
    assert np.array_equal(s.y, s.z)


def test_inner_pair_tracks_minimizers():
    a = np.array([1.0, -1.0, 0.5])
    b = np.array([2.0, 1.0, -1.0])
    lam = 100.0
    G = FunctionOracle(lambda X, Y: 0.5 * np.sum((Y - a) ** 2, axis=1), 1, 3)
    F = FunctionOracle(lambda X, Y: Y @ b, 1, 3)
    errs = []
    for seed in range(20):
        s = inner_loop_pair(F, G, np.zeros(1), InnerPairState(np.zeros(3), np.zeros(3)), 0.1, 2000, lam, 1e-4, RngStream(seed))
        errs.append(np.linalg.norm(s.q - (-b / lam)))
    assert np.median(errs) <= 0.2 * np.linalg.norm(b) / lam


def test_inner_step_eval_counts():
    P = quad_problem()
    inner_step_pair(P.oracle_F, P.oracle_G, np.ones(3), InnerPairState(np.zeros(3), np.zeros(3)), 0.1, 10.0, 1e-3, RngStream(0))
    q = P.queries()
    assert (q.f_evals, q.g_evals) == (2, 4)


def test_inner_step_requires_positive_step():
    P = quad_problem()
    with pytest.raises(InvalidParameterError):
        inner_step_pair(P.oracle_F, P.oracle_G, np.ones(3), InnerPairState(np.zeros(3), np.zeros(3)), 0.0, 10.0, 1e-3, RngStream(0))


def test_equal_pair_cancels_penalty_term_bitwise():
    P = quad_problem(3, 3, seed=2, noise_sigma_g=0.5)
    x, y = np.ones(3), RngStream(1).normal(3)
    a = penalty_grad_estimate(P.oracle_F, P.oracle_G, x, y, y, 1e-3, 1.0, 50, RngStream(5))
    b = penalty_grad_estimate(P.oracle_F, P.oracle_G, x, y, y, 1e-3, 1e6, 50, RngStream(5))
    assert np.array_equal(a, b)


def test_outer_step_unconstrained_is_gradient_step():
    P = quad_problem()
    x = np.ones(3)
    x1, d = outer_step_penalty(P.oracle_F, P.oracle_G, x, np.zeros(3), np.ones(3), small_cfg(alpha=0.25), RngStream(0))
    np.testing.assert_allclose(x1, x - 0.25 * d, rtol=0, atol=1e-15)


def test_outer_step_eval_counts():
    P = quad_problem()
    outer_step_penalty(P.oracle_F, P.oracle_G, np.ones(3), np.zeros(3), np.zeros(3), small_cfg(s_k=9), RngStream(0))
    q = P.queries()
    assert (q.f_evals, q.g_evals) == (18, 36)


def test_estimate_with_exact_pair():
    P = quad_problem(4, 4, seed=3)
    lam = 1e3
    x = np.array([0.3, -0.4, 1.0, 0.2])
    y, z = P.penalty_minimizers(x, lam)
    target = P.surrogate_grad(x, lam, y, z)
    root = RngStream(4)
    ds = np.array(
        [penalty_grad_estimate(P.oracle_F, P.oracle_G, x, y, z, 1e-6, lam, 10_000, root.derive("r", i)) for i in range(20)]
    )
    se = ds.std(0, ddof=1) / np.sqrt(len(ds))
    assert np.all(np.abs(ds.mean(0) - target) <= 5 * se + 1e-9)
    # surrogate vs true hypergradient is O(1/lam)
    assert np.linalg.norm(target - P.hypergrad(x)) <= 10 * P.constants.l1f * (1 + np.linalg.norm(x)) / lam


def test_displayed_form_switch():
    P = quad_problem(3, 3, seed=3)
    x = np.ones(3)
    y, z = P.penalty_minimizers(x, 100.0)
    a = penalty_grad_estimate(P.oracle_F, P.oracle_G, x, y, z, 1e-3, 100.0, 20, RngStream(0), "surrogate")
    b = penalty_grad_estimate(P.oracle_F, P.oracle_G, x, y, z, 1e-3, 100.0, 20, RngStream(0), "displayed")
    assert not np.allclose(a, b)
    with pytest.raises(InvalidParameterError):
        small_cfg(outer_form="other")


def test_run_zero_outer():
    tr = run_penalty(quad_problem(), small_cfg(n_outer=0), 0)
    assert len(tr.records) == 1


def test_run_query_totals_exact():
    cfg = small_cfg(n_outer=3, t_k=7, s_k=5)
    tr = run_penalty(quad_problem(), cfg, 0)
    per_f, per_g = 2 * 7 + 2 * 5, 4 * 7 + 4 * 5
    assert list(tr.f_evals) == [per_f * k for k in range(4)]
    assert list(tr.g_evals) == [per_g * k for k in range(4)]
    assert cfg.queries_per_outer() == (per_f, per_g)


def test_run_reproducible_and_seed_sensitive():
    a = run_penalty(quad_problem(), small_cfg(), 4)
    b = run_penalty(quad_problem(), small_cfg(), 4)
    c = run_penalty(quad_problem(), small_cfg(), 5)
    assert np.array_equal(a.x_final, b.x_final)
    assert not np.array_equal(a.x_final, c.x_final)


def test_schedule_arithmetic():
    cfg = penalty_schedule(10, 10, 0.01, ProblemConstants())
    assert cfg.lam == pytest.approx(10.0)
    assert (cfg.s_k, cfg.t_k) == (1000, 1000)
    assert cfg.beta == pytest.approx(0.001)
    assert cfg.smoothing.mu1 == pytest.approx(math.sqrt(0.01 / 1000))
    assert cfg.smoothing.mu1 == pytest.approx(0.00316, abs=1e-5)
    assert cfg.smoothing.eta1 == pytest.approx(math.sqrt(min(1 / (100 * 1000), 0.01 / 1000)))


def test_lambda_threshold():
    consts = ProblemConstants(l1f=1.0, lam_g=0.5)
    assert penalty_lambda_threshold(consts) == 8.0
    assert penalty_schedule(10, 10, 0.1, consts).lam == 8.0
    assert penalty_schedule(10, 10, 0.01, consts).lam == pytest.approx(10.0)
    with pytest.raises(ConfigError):
        penalty_schedule(10, 10, 0.1, consts, lam=5.0)


def test_halving_eps_ratios():
    a = penalty_schedule(10, 10, 0.02, ProblemConstants())
    b = penalty_schedule(10, 10, 0.01, ProblemConstants())
    assert b.s_k == 2 * a.s_k and b.t_k == 2 * a.t_k
    assert b.lam / a.lam == pytest.approx(math.sqrt(2))


def test_schedule_rejects_bad_eps():
    with pytest.raises(InvalidParameterError):
        penalty_schedule(3, 3, 0.0)
