import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zobilevel import (
    InvalidDimensionError,
    InvalidParameterError,
    ProblemConstants,
    QueryCounter,
    RngStream,
    SmoothingParams,
    derive_stream,
    sample_gaussian,
)
from zobilevel.core import check_diverged, divergence_limit_sq, DivergenceError


def test_derive_twice_gives_same_draws():
    root = RngStream(42)
    a = derive_stream(root, "inner", 3).normal(10)
    b = derive_stream(root, "inner", 3).normal(10)
    assert np.array_equal(a, b)


def test_sibling_streams_differ():
    root = RngStream(42)
    a = root.derive("inner", 3).normal(100)
    b = root.derive("inner", 4).normal(100)
    assert not np.array_equal(a, b)


def test_root_seed_changes_draws():
    a = RngStream(42).derive("inner", 3).normal(100)
    b = RngStream(43).derive("inner", 3).normal(100)
    assert not np.array_equal(a, b)


def test_labels_distinguish_streams():
    root = RngStream(0)
    assert not np.array_equal(root.derive("inner", 0).normal(20), root.derive("outer", 0).normal(20))


def test_nested_path_is_order_sensitive():
    root = RngStream(0)
    a = root.derive("a", 1).derive("b", 2).normal(20)
    b = root.derive("b", 2).derive("a", 1).normal(20)
    assert not np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), index=st.integers(0, 10**6))
def test_derive_is_pure(seed, index):
    s1 = RngStream(seed).derive("x", index)
    s2 = RngStream(seed).derive("x", index)
    assert s1 == s2
    assert np.array_equal(s1.normal(5), s2.normal(5))


def test_sample_gaussian_shape():
    v = sample_gaussian(RngStream(0), 5)
    assert v.shape == (5,)
    assert np.all(np.isfinite(v))


def test_sample_gaussian_invalid_dim():
    with pytest.raises(InvalidDimensionError):
        sample_gaussian(RngStream(0), 0)


def test_sample_gaussian_moments():
    # 5 sigma bounds for 1e6 draws
    draws = RngStream(7).derive("moments", 0).normal((1_000_000, 1))[:, 0]
    assert abs(draws.mean()) <= 0.005
    assert abs(draws.var() - 1.0) <= 0.01


def test_query_counter_arithmetic():
    a = QueryCounter(10, 20)
    b = QueryCounter(3, 5)
    d = a - b
    assert (d.f_evals, d.g_evals, d.total) == (7, 15, 22)


def test_smoothing_params_validation():
    SmoothingParams(0.1, 0.1, 0.0, 0.1)
    with pytest.raises(InvalidParameterError):
        SmoothingParams(0.1, 0.1, 0.1, 0.0)
    with pytest.raises(InvalidParameterError):
        SmoothingParams(-1.0, 0.1, 0.1, 0.1)
    s = SmoothingParams.uniform(1e-3)
    assert s.eta1 == s.mu2 == 1e-3


def test_problem_constants_validation():
    with pytest.raises(InvalidParameterError):
        ProblemConstants(lam_g=2.0, l1g=1.0)
    with pytest.raises(InvalidParameterError):
        ProblemConstants(l1psi=0.0)


def test_divergence_guard():
    v0 = np.ones(3)
    lim = divergence_limit_sq(v0)
    check_diverged(v0, lim, index=0, tag="t")
    with pytest.raises(DivergenceError) as exc:
        check_diverged(v0 * 1e9, lim, index=4, tag="t")
    assert exc.value.index == 4
    with pytest.raises(DivergenceError):
        check_diverged(np.array([np.nan]), lim, index=0, tag="t")
