# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics mirror ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def rolling_std(x, Py_ssize_t k):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    if k < 1 or n <= k:
        return np.empty(0)
    out = np.empty(n - k)
    cdef double[::1] ov = out
    cdef Py_ssize_t t, i
    cdef double mean, acc, d
    for t in range(k, n):
        mean = 0.0
        for i in range(t - k, t):
            mean += xv[i]
        mean /= k
        acc = 0.0
        for i in range(t - k, t):
            d = xv[i] - mean
            acc += d * d
        ov[t - k] = sqrt(acc / k)
    return out


def peak_prominences(x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    if n < 3:
        return np.empty(0, dtype=np.intp), np.empty(0)
    idx = np.empty(n, dtype=np.intp)
    prom = np.empty(n)
    cdef Py_ssize_t[::1] iv = idx
    cdef double[::1] pv = prom
    cdef Py_ssize_t p, j, count = 0
    cdef double h, lmin, rmin
    for p in range(1, n - 1):
        h = xv[p]
        if not (h > xv[p - 1] and h > xv[p + 1]):
            continue
        lmin = h
        j = p
        while j >= 0 and xv[j] <= h:
            if xv[j] < lmin:
                lmin = xv[j]
            j -= 1
        rmin = h
        j = p
        while j < n and xv[j] <= h:
            if xv[j] < rmin:
                rmin = xv[j]
            j += 1
        iv[count] = p
        pv[count] = h - (lmin if lmin > rmin else rmin)
        count += 1
    return idx[:count].copy(), prom[:count].copy()


cdef Py_ssize_t _omp_one(const double[:, ::1] G, const double[::1] alpha0,
                         double y_norm2, Py_ssize_t sparsity, double tol,
                         double[:, ::1] L, double[::1] alpha, double[::1] x,
                         double[::1] w, char[::1] selected,
                         Py_ssize_t[::1] support) noexcept nogil:
    cdef Py_ssize_t n = G.shape[0]
    cdef Py_ssize_t s = 0, i, j, q, best
    cdef double r2 = y_norm2, floor, c, cbest, acc, d2
    floor = 1e-12 * sqrt(y_norm2 if y_norm2 > 0.0 else 0.0)
    for i in range(n):
        alpha[i] = alpha0[i]
        selected[i] = 0
    while s < sparsity:
        if sqrt(r2 if r2 > 0.0 else 0.0) <= tol:
            break
        best = -1
        cbest = -1.0
        for i in range(n):
            if selected[i]:
                continue
            c = fabs(alpha[i])
            if c > cbest:
                cbest = c
                best = i
        if best < 0 or cbest <= floor:
            break
        j = best
        if s > 0:
            # forward solve L[:s,:s] w = G[support, j]
            for i in range(s):
                acc = G[support[i], j]
                for q in range(i):
                    acc -= L[i, q] * w[q]
                w[i] = acc / L[i, i]
            d2 = G[j, j]
            for i in range(s):
                d2 -= w[i] * w[i]
            if d2 <= 1e-12 * G[j, j]:
                break
            for i in range(s):
                L[s, i] = w[i]
            L[s, s] = sqrt(d2)
        else:
            L[0, 0] = sqrt(G[j, j])
        support[s] = j
        selected[j] = 1
        s += 1
        # solve L L^T x = alpha0[support]
        for i in range(s):
            acc = alpha0[support[i]]
            for q in range(i):
                acc -= L[i, q] * w[q]
            w[i] = acc / L[i, i]
        for i in range(s - 1, -1, -1):
            acc = w[i]
            for q in range(i + 1, s):
                acc -= L[q, i] * x[q]
            x[i] = acc / L[i, i]
        r2 = y_norm2
        for i in range(s):
            r2 -= x[i] * alpha0[support[i]]
        for i in range(n):
            acc = alpha0[i]
            for q in range(s):
                acc -= G[i, support[q]] * x[q]
            alpha[i] = acc
    return s


def omp_gram(G, alpha0, double y_norm2, Py_ssize_t sparsity, double tol):
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[::1] a0 = np.ascontiguousarray(alpha0, dtype=np.float64)
    cdef Py_ssize_t n = Gv.shape[0]
    cdef Py_ssize_t cap = sparsity if sparsity > 1 else 1
    L = np.zeros((cap, cap))
    alpha = np.empty(n)
    x = np.empty(cap)
    w = np.empty(cap)
    selected = np.zeros(n, dtype=np.int8)
    support = np.empty(cap, dtype=np.intp)
    cdef Py_ssize_t s = _omp_one(Gv, a0, y_norm2, sparsity, tol, L, alpha, x, w,
                                 selected, support)
    return support[:s].copy(), x[:s].copy()


def omp_batch(D, Y, Py_ssize_t sparsity, double tol):
    D = np.asarray(D, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    Gm = np.ascontiguousarray(D.T @ D)
    A0 = np.ascontiguousarray((D.T @ Y).T)
    norms = np.einsum("ij,ij->j", Y, Y)
    cdef const double[:, ::1] Gv = Gm
    cdef const double[:, ::1] A0v = A0
    cdef const double[::1] nv = norms
    cdef Py_ssize_t n = Gv.shape[0], N = A0v.shape[0], col, i, s
    cdef Py_ssize_t cap = sparsity if sparsity > 1 else 1
    X = np.zeros((n, N))
    cdef double[:, ::1] Xv = X
    cdef double[:, ::1] L = np.zeros((cap, cap))
    cdef double[::1] alpha = np.empty(n)
    cdef double[::1] x = np.empty(cap)
    cdef double[::1] w = np.empty(cap)
    cdef char[::1] selected = np.zeros(n, dtype=np.int8)
    cdef Py_ssize_t[::1] support = np.empty(cap, dtype=np.intp)
    with nogil:
        for col in range(N):
            s = _omp_one(Gv, A0v[col], nv[col], sparsity, tol, L, alpha, x, w,
                         selected, support)
            for i in range(s):
                Xv[support[i], col] = x[i]
    return X


cdef bint _chol(const double[:, ::1] gram, Py_ssize_t[::1] active, Py_ssize_t k,
                double[:, ::1] L) noexcept nogil:
    cdef Py_ssize_t i, j, q
    cdef double acc
    for i in range(k):
        for j in range(i + 1):
            acc = gram[active[i], active[j]]
            for q in range(j):
                acc -= L[i, q] * L[j, q]
            if i == j:
                if acc <= 0.0:
                    return False
                L[i, i] = sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    return True


cdef void _forward(double[:, ::1] L, Py_ssize_t k, double[::1] b, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, q
    cdef double acc
    for i in range(k):
        acc = b[i]
        for q in range(i):
            acc -= L[i, q] * out[q]
        out[i] = acc / L[i, i]


def lasso_homotopy(A, y, double epsilon, Py_ssize_t max_iter):
    Am = np.ascontiguousarray(A, dtype=np.float64)
    ym = np.ascontiguousarray(y, dtype=np.float64)
    gm = np.ascontiguousarray(Am.T @ Am)
    cm = np.ascontiguousarray(Am.T @ ym)
    cdef const double[:, ::1] Av = Am
    cdef const double[:, ::1] gram = gm
    cdef Py_ssize_t m = Av.shape[0], n = Av.shape[1]
    x = np.zeros(n)
    if n == 0:
        return x, 0, False
    cdef double[::1] xv = x
    cdef double[::1] r = ym.copy()
    cdef double[::1] c = cm
    cdef double[::1] u = np.empty(m)
    cdef double[::1] a = np.empty(n)
    cdef double[:, ::1] L = np.empty((n, n))
    cdef double[::1] b = np.empty(n)
    cdef double[::1] z = np.empty(n)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] signs = np.empty(n)
    cdef Py_ssize_t[::1] active = np.empty(n, dtype=np.intp)
    cdef char[::1] inact = np.ones(n, dtype=np.int8)
    # 0 open, 1 no +1 join, 2 no -1 join, 3 closed
    cdef char[::1] blocked = np.zeros(n, dtype=np.int8)
    cdef Py_ssize_t k = 0, i, j, q, it = 0, j_join, k_leave
    cdef double lam, eps2 = epsilon * epsilon, tiny, uu, ru, rr, disc
    cdef double g_eps, g_join, g_leave, g, den, step, acc, inf = float("inf")
    cdef double sgn
    cdef int reached = 0
    with nogil:
        j = 0
        for i in range(n):
            if fabs(c[i]) > fabs(c[j]):
                j = i
        lam = fabs(c[j])
        active[0] = j
        signs[0] = 1.0 if c[j] >= 0 else -1.0
        inact[j] = 0
        k = 1
        tiny = 1e-12 * (lam if lam > 1.0 else 1.0)
        while it < max_iter:
            it += 1
            if k == 0 or not _chol(gram, active, k, L):
                break
            # d = G^{-1} s
            _forward(L, k, signs, z)
            for i in range(k - 1, -1, -1):
                acc = z[i]
                for q in range(i + 1, k):
                    acc -= L[q, i] * d[q]
                d[i] = acc / L[i, i]
            for i in range(m):
                acc = 0.0
                for q in range(k):
                    acc += Av[i, active[q]] * d[q]
                u[i] = acc
            for i in range(n):
                acc = 0.0
                for q in range(k):
                    acc += gram[i, active[q]] * d[q]
                a[i] = acc
            uu = 0.0
            ru = 0.0
            rr = 0.0
            for i in range(m):
                uu += u[i] * u[i]
                ru += r[i] * u[i]
                rr += r[i] * r[i]
            g_eps = inf
            if uu > 0:
                disc = ru * ru - uu * (rr - eps2)
                if disc >= 0:
                    g_eps = (ru - sqrt(disc)) / uu
                    if g_eps < 0.0:
                        g_eps = 0.0
            g_join = inf
            j_join = -1
            for q in range(2):
                sgn = 1.0 - 2.0 * q
                for i in range(n):
                    if not inact[i] or blocked[i] == 3 or blocked[i] == q + 1:
                        continue
                    den = 1.0 - sgn * a[i]
                    if not den > 1e-12:
                        continue
                    g = (lam - sgn * c[i]) / den
                    if g <= tiny:
                        continue
                    if g < g_join:
                        g_join = g
                        j_join = i
            g_leave = inf
            k_leave = -1
            for q in range(k):
                if d[q] * xv[active[q]] < 0:
                    g = -xv[active[q]] / d[q]
                    if g > tiny and g < g_leave:
                        g_leave = g
                        k_leave = q
            step = g_eps
            if g_join < step:
                step = g_join
            if g_leave < step:
                step = g_leave
            if lam < step:
                step = lam
            for q in range(k):
                xv[active[q]] += step * d[q]
            lam -= step
            for i in range(m):
                r[i] -= step * u[i]
            for i in range(n):
                c[i] -= step * a[i]
            if step == g_eps:
                reached = 1
                break
            if lam <= 0:
                break
            if step == g_leave:
                j = active[k_leave]
                g = signs[k_leave]
                for q in range(k_leave, k - 1):
                    active[q] = active[q + 1]
                    signs[q] = signs[q + 1]
                k -= 1
                xv[j] = 0.0
                inact[j] = 1
                for i in range(n):
                    blocked[i] = 0
                # only a same-sign rejoin is spurious; flipping sign is a real event
                blocked[j] = 1 if g > 0 else 2
                continue
            j = j_join
            for q in range(k):
                b[q] = gram[active[q], j]
            _forward(L, k, b, z)
            acc = gram[j, j]
            for q in range(k):
                acc -= z[q] * z[q]
            if acc <= 1e-10 * gram[j, j]:
                blocked[j] = 3
                continue
            active[k] = j
            signs[k] = 1.0 if c[j] >= 0 else -1.0
            inact[j] = 0
            k += 1
            for i in range(n):
                blocked[i] = 0
    return x, it, bool(reached)
