"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the compiled build is tested against. Signatures and results
match ``_kernels.pyx`` exactly.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import cho_solve, solve_triangular
from scipy.signal import peak_prominences as _scipy_prominences

_CHUNK = 1 << 15


def rolling_std(x: np.ndarray, k: int) -> np.ndarray:
    """Population std of ``x[t-k:t]`` for every ``t`` in ``[k, n)``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or n <= k:
        return np.empty(0)
    views = sliding_window_view(x, k)[: n - k]
    out = np.empty(n - k)
    for start in range(0, n - k, _CHUNK):
        out[start:start + _CHUNK] = views[start:start + _CHUNK].std(axis=1)
    return out


def peak_prominences(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strict interior local maxima of ``x`` and their topographic prominence."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape[0] < 3:
        return np.empty(0, dtype=np.intp), np.empty(0)
    mid = x[1:-1]
    idx = np.flatnonzero((mid > x[:-2]) & (mid > x[2:])) + 1
    if idx.size == 0:
        return idx.astype(np.intp), np.empty(0)
    prom = _scipy_prominences(x, idx)[0]
    return idx.astype(np.intp), prom


def omp_gram(G: np.ndarray, alpha0: np.ndarray, y_norm2: float,
             sparsity: int, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky-updated OMP working from the Gram matrix and ``D.T @ y``.

    Returns the support in selection order and the least-squares
    coefficients on it.
    """
    n = G.shape[0]
    support: list[int] = []
    selected = np.zeros(n, dtype=bool)
    L = np.zeros((sparsity, sparsity))
    x = np.empty(0)
    alpha = alpha0.copy()
    r2 = y_norm2
    floor = 1e-12 * math.sqrt(max(y_norm2, 0.0))
    while len(support) < sparsity:
        if math.sqrt(max(r2, 0.0)) <= tol:
            break
        c = np.abs(alpha)
        c[selected] = -1.0
        j = int(np.argmax(c))
        if c[j] <= floor:
            break
        s = len(support)
        if s:
            w = solve_triangular(L[:s, :s], G[support, j], lower=True)
            d2 = G[j, j] - w @ w
            if d2 <= 1e-12 * G[j, j]:
                break
            L[s, :s] = w
            L[s, s] = math.sqrt(d2)
        else:
            L[0, 0] = math.sqrt(G[j, j])
        support.append(j)
        selected[j] = True
        s += 1
        x = cho_solve((L[:s, :s], True), alpha0[support])
        alpha = alpha0 - G[:, support] @ x
        r2 = y_norm2 - x @ alpha0[support]
    return np.asarray(support, dtype=np.intp), np.asarray(x, dtype=np.float64)


def omp_batch(D: np.ndarray, Y: np.ndarray, sparsity: int, tol: float) -> np.ndarray:
    """Code every column of ``Y`` against ``D``; returns an atoms x samples matrix."""
    D = np.asarray(D, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    G = D.T @ D
    A0 = D.T @ Y
    norms = np.einsum("ij,ij->j", Y, Y)
    X = np.zeros((D.shape[1], Y.shape[1]))
    for i in range(Y.shape[1]):
        support, coef = omp_gram(G, A0[:, i], float(norms[i]), sparsity, tol)
        X[support, i] = coef
    return X


def lasso_homotopy(A: np.ndarray, y: np.ndarray, epsilon: float,
                   max_iter: int) -> tuple[np.ndarray, int, bool]:
    """Follow the LASSO path from ``x = 0`` until ``||y - A x|| = epsilon``.

    Returns ``(x, breakpoints, reached)``; ``reached`` is False when the
    path ends (penalty hits zero, singular active set, budget) first.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = A.shape[1]
    x = np.zeros(n)
    gram = A.T @ A
    r = y.copy()
    c = A.T @ r
    if n == 0:
        return x, 0, False
    first = int(np.argmax(np.abs(c)))
    lam = float(abs(c[first]))
    active = [first]
    signs = [1.0 if c[first] >= 0 else -1.0]
    # 0 open, 1 no +1 join, 2 no -1 join, 3 closed
    blocked = np.zeros(n, dtype=np.int8)
    eps2 = epsilon * epsilon
    tiny = 1e-12 * max(lam, 1.0)
    it = 0
    while it < max_iter:
        it += 1
        if not active:
            return x, it, False
        try:
            L = np.linalg.cholesky(gram[np.ix_(active, active)])
        except np.linalg.LinAlgError:
            return x, it, False
        d = cho_solve((L, True), np.asarray(signs))
        u = A[:, active] @ d
        a = gram[:, active] @ d
        uu, ru, rr = float(u @ u), float(r @ u), float(r @ r)
        g_eps = math.inf
        if uu > 0:
            disc = ru * ru - uu * (rr - eps2)
            if disc >= 0:
                g_eps = max((ru - math.sqrt(disc)) / uu, 0.0)
        g_join, j_join = math.inf, -1
        for q, sgn in ((1, 1.0), (2, -1.0)):
            open_ = (blocked != 3) & (blocked != q)
            open_[active] = False
            den = 1.0 - sgn * a
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(open_ & (den > 1e-12), (lam - sgn * c) / den, math.inf)
            g[g <= tiny] = math.inf
            k = int(np.argmin(g))
            if g[k] < g_join:
                g_join, j_join = float(g[k]), k
        xa = x[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            gl = np.where(d * xa < 0, -xa / d, math.inf)
        gl[gl <= tiny] = math.inf
        k_leave = int(np.argmin(gl))
        g_leave = float(gl[k_leave])
        step = min(g_eps, g_join, g_leave, lam)
        x[active] += step * d
        lam -= step
        r -= step * u
        c -= step * a
        if step == g_eps:
            return x, it, True
        if lam <= 0:
            return x, it, False
        if step == g_leave:
            j = active.pop(k_leave)
            s = signs.pop(k_leave)
            x[j] = 0.0
            blocked[:] = 0
            # only a same-sign rejoin is spurious; flipping sign is a real event
            blocked[j] = 1 if s > 0 else 2
            continue
        j = j_join
        # reject a column inside the span of the active set
        w = solve_triangular(L, gram[active, j], lower=True)
        if gram[j, j] - w @ w <= 1e-10 * gram[j, j]:
            blocked[j] = 3
            continue
        active.append(j)
        signs.append(1.0 if c[j] >= 0 else -1.0)
        blocked[:] = 0
    return x, it, False
