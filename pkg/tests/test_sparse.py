import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from oracles import bpdn_oracle, random_sparse_instance

from kehmode.errors import InvalidInputError, InvalidParameterError, NonConvergenceError
from kehmode.sparse import (ClassDictionary, StackedDictionary, bpdn_solve, ksvd_train,
                            normalize_columns, omp, reconstruction_error)


# --- l1 solver ----------------------------------------------------------

def test_bpdn_matches_exhaustive_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for _ in range(100):
        A, y = random_sparse_instance(rng)
        code = bpdn_solve(A, y, 0.05)
        kmax = max(3, len(code.support))
        assert np.abs(code.coefficients).sum() == pytest.approx(
            bpdn_oracle(A, y, 0.05, kmax), abs=1e-4)
        assert code.residual_norm <= 0.05 + 1e-6
    assert time.perf_counter() - start < 60


def test_bpdn_trivial_when_signal_is_small():
    A = normalize_columns(np.eye(3))
    code = bpdn_solve(A, np.array([0.01, 0.0, 0.0]), 0.1)
    assert not np.any(code.coefficients) and code.support.size == 0


def test_bpdn_identity_dictionary_soft_thresholds():
    y = np.array([3.0, 0.0, 0.0, 0.0])
    code = bpdn_solve(np.eye(4), y, 1.0)
    np.testing.assert_allclose(code.coefficients, [2.0, 0, 0, 0], atol=1e-12)


def test_bpdn_argument_checks():
    A = np.eye(3)
    with pytest.raises(InvalidParameterError):
        bpdn_solve(A, np.ones(3), 0.0)
    with pytest.raises(InvalidInputError):
        bpdn_solve(A, np.ones(4), 0.1)


def test_bpdn_unreachable_target_raises_with_last_iterate():
    A = np.array([[1.0], [0.0]])
    with pytest.raises(NonConvergenceError) as info:
        bpdn_solve(A, np.array([0.0, 1.0]), 0.5)
    assert info.value.last is not None and not info.value.last.converged


def test_bpdn_budget_exhaustion():
    rng = np.random.default_rng(3)
    A = normalize_columns(rng.normal(size=(6, 12)))
    with pytest.raises(NonConvergenceError):
        bpdn_solve(A, rng.normal(size=6), 1e-3, max_iter=1)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 20.0))
def test_bpdn_is_positively_homogeneous(seed, c):
    A, y = random_sparse_instance(np.random.default_rng(seed))
    x = bpdn_solve(A, y, 0.05).coefficients
    xc = bpdn_solve(A, c * y, c * 0.05).coefficients
    np.testing.assert_allclose(xc, c * x, rtol=1e-6, atol=1e-7 * c)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1))
def test_bpdn_certificate(seed):
    A, y = random_sparse_instance(np.random.default_rng(seed))
    code = bpdn_solve(A, y, 0.05)
    assert code.converged
    assert code.duality_gap <= 1e-7 * max(1.0, np.abs(code.coefficients).sum())
    assert code.residual_norm <= 0.05 + 1e-6


# --- OMP ----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(50))
def test_omp_exact_on_orthonormal(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(3, 10))
    D = ortho_group.rvs(m, random_state=seed)
    k = int(rng.integers(1, m + 1))
    x0 = np.zeros(m)
    idx = rng.choice(m, k, replace=False)
    x0[idx] = rng.choice([-1, 1], k) * rng.uniform(0.5, 2.0, k)
    code = omp(D, D @ x0, k)
    assert list(code.support) == sorted(idx)
    np.testing.assert_allclose(code.coefficients, x0, atol=1e-10)


def test_omp_stops_at_residual_tolerance():
    D = np.eye(4)
    code = omp(D, np.array([4.0, 1.0, 0.1, 0.0]), 3, residual_tol=0.5)
    assert list(code.support) == [0, 1]


def test_omp_argument_checks():
    with pytest.raises(InvalidParameterError):
        omp(np.eye(3), np.ones(3), 0)
    with pytest.raises(InvalidParameterError):
        omp(np.eye(3), np.ones(3), 4)
    with pytest.raises(InvalidParameterError):
        omp(np.eye(3), np.ones(3), 1, residual_tol=-1.0)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1))
def test_omp_residual_orthogonal_to_support(seed):
    rng = np.random.default_rng(seed)
    D = normalize_columns(rng.normal(size=(8, 20)))
    y = rng.normal(size=8)
    code = omp(D, y, 4)
    r = y - D @ code.coefficients
    assert len(code.support) <= 4
    np.testing.assert_allclose(D[:, code.support].T @ r, 0.0, atol=1e-9)


# --- K-SVD --------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_ksvd_update_never_increases_error(seed):
    S = np.random.default_rng(seed).normal(size=(8, 40))
    start = time.perf_counter()
    d = ksvd_train(S, 12, 3, 30)
    assert time.perf_counter() - start < 30
    assert len(d.history) == 30
    for before, after in d.history:
        assert after <= before * (1 + 1e-12) + 1e-12
    np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-9)


def test_ksvd_random_init_is_seeded():
    S = np.random.default_rng(0).normal(size=(5, 30))
    a = ksvd_train(S, 6, 2, 5, init="random", seed=4).atoms
    b = ksvd_train(S, 6, 2, 5, init="random", seed=4).atoms
    assert a.tobytes() == b.tobytes()


def test_ksvd_fits_a_union_of_lines():
    rng = np.random.default_rng(2)
    basis = normalize_columns(rng.normal(size=(6, 3)))
    S = basis[:, rng.integers(0, 3, 60)] * rng.uniform(0.5, 2, 60)
    d = ksvd_train(S, 3, 1, 20, init="random", seed=0)
    X = np.zeros((3, 60))
    for i in range(60):
        X[:, i] = omp(d.atoms, S[:, i], 1).coefficients
    assert reconstruction_error(S, d.atoms, X) < 1e-8


def test_ksvd_argument_checks():
    S = np.ones((3, 4))
    with pytest.raises(InvalidInputError):
        ksvd_train(np.zeros((3, 4)), 2, 1)
    with pytest.raises(InvalidParameterError):
        ksvd_train(S, 2, 3)
    with pytest.raises(InvalidParameterError):
        ksvd_train(S, 2, 1, init="kmeans")


def test_ksvd_handles_zero_samples():
    S = np.zeros((4, 10))
    S[:, 5:] = np.random.default_rng(0).normal(size=(4, 5))
    d = ksvd_train(S, 4, 2, 5)
    assert np.all(np.isfinite(d.atoms))
    np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-9)


# --- stacked dictionary -------------------------------------------------

def test_stacked_dictionary_ranges_and_projection():
    a = ClassDictionary(np.eye(3)[:, :2] * 2, "a")
    b = ClassDictionary(np.eye(3)[:, 2:], "b")
    s = StackedDictionary.stack([a, b])
    assert s.class_ranges == {"a": (0, 2), "b": (2, 3)}
    np.testing.assert_allclose(s.atoms, np.eye(3))
    np.testing.assert_array_equal(s.class_projection(np.array([1.0, 2, 3]), "a"), [1, 2, 0])
    back = StackedDictionary.from_json(s.to_json())
    assert back.atoms.tobytes() == s.atoms.tobytes() and back.class_ranges == s.class_ranges


def test_normalize_rejects_zero_column():
    with pytest.raises(InvalidInputError):
        normalize_columns(np.array([[1.0, 0.0], [0.0, 0.0]]))


# --- worked examples ----------------------------------------------------

def test_omp_examples():
    D = ortho_group.rvs(4, random_state=0)
    code = omp(D, D[:, 3], 1)
    assert list(code.support) == [3] and code.coefficients[3] == pytest.approx(1.0)
    assert code.residual_norm == pytest.approx(0.0, abs=1e-12)
    code = omp(D, 2 * D[:, 1] + 3 * D[:, 2], 2)
    np.testing.assert_allclose(code.coefficients, [0, 2, 3, 0], atol=1e-12)
    y = np.array([0.0, 0.0, 1.0])
    code = omp(np.eye(3)[:, :2], y, 2)
    assert code.support.size == 0 and code.residual_norm == 1.0


def test_ksvd_examples():
    Q = ortho_group.rvs(6, random_state=1)[:, :3]
    d = ksvd_train(Q, 3, 1, 10)
    X = np.abs(d.atoms.T @ Q)
    np.testing.assert_allclose(np.sort(X.max(axis=0)), 1.0, atol=1e-12)
    assert d.history[-1][1] < 1e-12
    S = np.random.default_rng(0).normal(size=(5, 8))
    d0 = ksvd_train(S, 4, 2, 0)
    np.testing.assert_allclose(d0.atoms, S[:, :4] / np.linalg.norm(S[:, :4], axis=0))
    assert d0.history == []
    d16 = ksvd_train(np.random.default_rng(1).normal(size=(8, 40)), 16, 3, 30)
    assert all(after <= before * (1 + 1e-12) for before, after in d16.history)


def test_bpdn_examples():
    A = normalize_columns(np.random.default_rng(0).normal(size=(5, 12)))
    code = bpdn_solve(A, A[:, 0], 1e-3)
    l1 = np.abs(code.coefficients).sum()
    assert 1 - 1e-3 * np.sqrt(12) <= l1 <= 1 + 1e-12
    assert code.residual_norm <= 1e-3 + 1e-9
    assert not np.any(bpdn_solve(A, A[:, 0], 1.0).coefficients)
