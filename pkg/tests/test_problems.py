import numpy as np
import pytest

from zobilevel import (
    ConfigError,
    HyperRepSpec,
    QuadraticBilevelSpec,
    RngStream,
    UnsupportedOperationError,
    make_hyper_rep,
    make_quadratic,
    true_hypergrad,
)
from zobilevel.problems import BilevelProblem
from zobilevel.validation import fd_grad

from conftest import linear_oracle


def test_quadratic_hypergrad_matches_fd():
    P = make_quadratic(QuadraticBilevelSpec.random(6, 4, seed=1))
    root = RngStream(0)
    for i in range(10):
        x = root.derive("x", i).normal(6)
        g = P.hypergrad(x)
        fd = fd_grad(P.psi, x, 1e-5)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(1.0, np.linalg.norm(g))


def test_quadratic_zero_coupling():
    spec = QuadraticBilevelSpec(np.eye(3), np.zeros((3, 3)), np.zeros(3), rho=1.0)
    P = make_quadratic(spec)
    np.testing.assert_allclose(P.hypergrad(np.eye(3)[0]), np.eye(3)[0])


def test_quadratic_rejects_non_spd():
    with pytest.raises(ConfigError):
        QuadraticBilevelSpec(np.diag([1.0, -1.0]), np.eye(2), np.zeros(2))
    with pytest.raises(ConfigError):
        QuadraticBilevelSpec(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2), np.zeros(2))


def test_quadratic_lower_stationarity():
    P = make_quadratic(QuadraticBilevelSpec.random(5, 5, seed=2))
    x = np.ones(5)
    assert np.linalg.norm(P.grad_y_g(x, P.y_star(x))) <= 1e-10


def test_quadratic_oracles_match_deterministic():
    P = make_quadratic(QuadraticBilevelSpec.random(3, 4, seed=3))
    x, y = np.arange(3.0), -np.arange(4.0)
    assert P.oracle_F.value(x, y, np.zeros(0)) == pytest.approx(P.f(x, y))
    assert P.oracle_G.value(x, y, np.zeros(0)) == pytest.approx(P.g(x, y))


def test_quadratic_noise_is_additive_and_seeded():
    P = make_quadratic(QuadraticBilevelSpec.random(2, 2, seed=0, noise_sigma_f=0.5))
    F = P.oracle_F
    noise = F.sample_noise(RngStream(1), 20000)
    vals = F(np.zeros((20000, 2)), np.zeros((20000, 2)), noise) - P.f(np.zeros(2), np.zeros(2))
    assert abs(vals.std() - 0.5) < 0.02


def test_quadratic_spec_roundtrip():
    spec = QuadraticBilevelSpec.random(3, 2, seed=4, noise_sigma_g=0.1)
    back = QuadraticBilevelSpec.from_dict(spec.to_dict())
    np.testing.assert_array_equal(back.B, spec.B)
    np.testing.assert_array_equal(back.C, spec.C)
    assert back.noise_sigma_g == 0.1


def test_quadratic_constants():
    P = make_quadratic(QuadraticBilevelSpec.random(4, 4, seed=5, eig_range=(1.0, 3.0)))
    c = P.constants
    assert c.lam_g == pytest.approx(1.0)
    assert c.l1psi == pytest.approx(np.linalg.eigvalsh(P.hess_psi)[-1])
    assert c.lam_g <= c.l1g


def test_penalty_minimizers_stationary():
    P = make_quadratic(QuadraticBilevelSpec.random(4, 3, seed=6))
    x, lam = np.ones(4), 50.0
    y, z = P.penalty_minimizers(x, lam)
    np.testing.assert_allclose(P.grad_y_f(x, y) / lam + P.grad_y_g(x, y), 0, atol=1e-12)
    np.testing.assert_allclose(P.grad_y_g(x, z), 0, atol=1e-12)


def small_hyper(**kw):
    args = dict(d_in=3, d_out=4, n1=20, n2=20, seed=0)
    args.update(kw)
    spec, x0, y0 = HyperRepSpec.planted(**args)
    return spec, make_hyper_rep(spec), x0, y0


def test_hyper_rep_full_batch_matches_deterministic():
    spec, P, _, _ = small_hyper(minibatch_rows=20)
    x, y = RngStream(0).normal(12), RngStream(1).normal(4)
    noise = P.oracle_G.sample_noise(RngStream(2), 5)
    vals = P.oracle_G(np.tile(x, (5, 1)), np.tile(y, (5, 1)), noise)
    np.testing.assert_allclose(vals, P.g(x, y), rtol=1e-12)


def test_hyper_rep_large_gamma_limit():
    spec, P, _, _ = small_hyper(gamma=1e3)
    x = RngStream(3).normal(12)
    g = P.hypergrad(x)
    assert np.linalg.norm(g - 1e3 * x) <= 0.01 * np.linalg.norm(1e3 * x)
    assert np.linalg.norm(P.y_star(x)) < 1e-2
    assert P.psi(x) == pytest.approx(spec.b1 @ spec.b1 / (2 * 20) + 0.5e3 * x @ x, rel=1e-3)


def test_hyper_rep_planted_is_stationary():
    spec, P, x0, y0 = small_hyper(gamma=1e-8)
    x_rand = RngStream(4).normal(12)
    assert np.linalg.norm(P.hypergrad(x0)) < 1e-3 * np.linalg.norm(P.hypergrad(x_rand))


def test_hyper_rep_lower_stationarity():
    _, P, _, _ = small_hyper()
    x = RngStream(5).normal(12)
    assert np.linalg.norm(P.grad_y_g(x, P.y_star(x))) < 1e-10


def test_hyper_rep_rejects_oversized_minibatch():
    with pytest.raises(ConfigError):
        small_hyper(minibatch_rows=21)


def test_hyper_rep_scaled_queries():
    _, P, _, _ = small_hyper(minibatch_rows=5)
    assert P.minibatch_rows == 5


def test_true_hypergrad_requires_analytic():
    P = BilevelProblem(linear_oracle(n=2, m=2), linear_oracle(n=2, m=2))
    with pytest.raises(UnsupportedOperationError):
        true_hypergrad(P, np.zeros(2))
    with pytest.raises(UnsupportedOperationError):
        P.y_star(np.zeros(2))


def test_hyper_rep_spec_roundtrip():
    spec, _, _, _ = small_hyper()
    back = HyperRepSpec.from_dict(spec.to_dict())
    np.testing.assert_array_equal(back.chi1, spec.chi1)
    assert back.minibatch_rows == spec.minibatch_rows
