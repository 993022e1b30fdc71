"""The compiled kernels agree with the numpy fallback."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kehmode import _kernels_py as py
from kehmode import kernels

compiled = pytest.importorskip("kehmode._kernels")


def test_dispatch_prefers_compiled():
    assert kernels.BACKEND in ("compiled", "python")
    if kernels.BACKEND == "compiled":
        assert kernels.omp_gram is compiled.omp_gram


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 300), st.integers(1, 120))
def test_rolling_std(seed, n, k):
    x = np.random.default_rng(seed).normal(size=n) * 5 + 100
    np.testing.assert_allclose(compiled.rolling_std(x, k), py.rolling_std(x, k),
                               rtol=1e-9, atol=1e-9)


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 300))
def test_peak_prominences(seed, n):
    x = np.round(np.random.default_rng(seed).normal(size=n), 1)
    ci, cp = compiled.peak_prominences(x)
    pi, pp = py.peak_prominences(x)
    np.testing.assert_array_equal(ci, pi)
    np.testing.assert_allclose(cp, pp, rtol=0, atol=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6), st.floats(0.0, 0.5))
def test_omp(seed, k, tol):
    rng = np.random.default_rng(seed)
    D = rng.normal(size=(8, 15))
    D /= np.linalg.norm(D, axis=0)
    Y = rng.normal(size=(8, 5))
    np.testing.assert_allclose(compiled.omp_batch(D, Y, k, tol), py.omp_batch(D, Y, k, tol),
                               rtol=1e-9, atol=1e-12)
    s1, c1 = compiled.omp_gram(D.T @ D, D.T @ Y[:, 0], float(Y[:, 0] @ Y[:, 0]), k, tol)
    s2, c2 = py.omp_gram(D.T @ D, D.T @ Y[:, 0], float(Y[:, 0] @ Y[:, 0]), k, tol)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_allclose(c1, c2, rtol=1e-9, atol=1e-12)


@settings(max_examples=60)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 1.0))
def test_lasso_homotopy(seed, eps):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(3, 12))
    A = rng.normal(size=(m, int(rng.integers(m, 40))))
    A /= np.linalg.norm(A, axis=0)
    y = rng.normal(size=m)
    x1, it1, ok1 = compiled.lasso_homotopy(A, y, eps, 500)
    x2, it2, ok2 = py.lasso_homotopy(A, y, eps, 500)
    assert (it1, ok1) == (it2, ok2)
    np.testing.assert_allclose(x1, x2, rtol=1e-8, atol=1e-10)
