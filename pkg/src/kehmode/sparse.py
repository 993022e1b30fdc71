"""Sparse coding solvers and K-SVD dictionary learning."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidInputError, InvalidParameterError, NonConvergenceError

log = logging.getLogger(__name__)

NORM_TOL = 1e-9
ZERO_TRUNCATION = 1e-8


@dataclass(eq=False)
class SparseCode:
    coefficients: np.ndarray
    support: np.ndarray
    residual_norm: float = 0.0
    duality_gap: float = 0.0
    iterations: int = 0
    converged: bool = True

    @classmethod
    def from_coefficients(cls, x: np.ndarray, **kw) -> "SparseCode":
        x = np.where(np.abs(x) < ZERO_TRUNCATION, 0.0, x)
        return cls(x, np.flatnonzero(x), **kw)


@dataclass(eq=False)
class ClassDictionary:
    atoms: np.ndarray
    class_id: str | None = None
    history: list[tuple[float, float]] = field(default_factory=list)


@dataclass(eq=False)
class StackedDictionary:
    """Column-wise concatenation of per-class dictionaries."""

    atoms: np.ndarray
    class_ranges: dict[str, tuple[int, int]]

    @classmethod
    def stack(cls, dictionaries: list[ClassDictionary]) -> "StackedDictionary":
        ranges, start = {}, 0
        for d in dictionaries:
            ranges[d.class_id] = (start, start + d.atoms.shape[1])
            start += d.atoms.shape[1]
        atoms = np.hstack([d.atoms for d in dictionaries])
        return cls(normalize_columns(atoms), ranges)

    def class_projection(self, x: np.ndarray, class_id: str) -> np.ndarray:
        """Coefficients of one class kept, all others zeroed."""
        out = np.zeros_like(x)
        a, b = self.class_ranges[class_id]
        out[a:b] = x[a:b]
        return out

    def to_json(self) -> dict:
        m, n = self.atoms.shape
        return {"rows": m, "cols": n,
                "atoms": [float(v) for v in self.atoms.ravel(order="C")],
                "class_ranges": {k: [a, b] for k, (a, b) in self.class_ranges.items()}}

    @classmethod
    def from_json(cls, d: dict) -> "StackedDictionary":
        atoms = np.array(d["atoms"], dtype=np.float64).reshape(d["rows"], d["cols"])
        return cls(atoms, {k: (int(a), int(b)) for k, (a, b) in d["class_ranges"].items()})


def normalize_columns(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms <= 0):
        raise InvalidInputError("cannot normalize a zero column", module="sparse")
    return M / norms


def omp(dictionary: np.ndarray, y: np.ndarray, sparsity: int,
        residual_tol: float = 0.0) -> SparseCode:
    """Orthogonal matching pursuit with least-squares refits on the support."""
    D = np.asarray(dictionary, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, n = D.shape
    if not 1 <= sparsity <= min(m, n):
        raise InvalidParameterError(f"sparsity must be in [1, {min(m, n)}]", module="sparse")
    if residual_tol < 0:
        raise InvalidParameterError("residual_tol must be non-negative", module="sparse")
    support, coef = kernels.omp_gram(D.T @ D, D.T @ y, float(y @ y), sparsity, residual_tol)
    x = np.zeros(n)
    x[support] = coef
    return SparseCode(x, np.sort(support), float(np.linalg.norm(y - D @ x)),
                      iterations=len(support))


def reconstruction_error(S: np.ndarray, D: np.ndarray, X: np.ndarray) -> float:
    return float(np.linalg.norm(S - D @ X))


def _update_atoms(S: np.ndarray, D: np.ndarray, X: np.ndarray) -> None:
    """In-place K-SVD dictionary stage: rank-1 refit of each atom and its row."""
    E = S - D @ X
    for j in range(D.shape[1]):
        users = np.flatnonzero(X[j])
        if users.size == 0:
            # dead atom: swap in the worst-represented sample
            worst = int(np.argmax(np.einsum("ij,ij->j", E, E)))
            col = S[:, worst]
            norm = np.linalg.norm(col)
            if norm > 0:
                D[:, j] = col / norm
            continue
        Ej = E[:, users] + np.outer(D[:, j], X[j, users])
        atom, row = _rank1(Ej)
        if atom is None:
            continue
        D[:, j] = atom
        X[j, users] = row
        E[:, users] = Ej - np.outer(atom, row)


def _rank1(M: np.ndarray):
    """Dominant singular pair of ``M`` as (unit left vector, sigma * right vector).

    Works through the eigendecomposition of the smaller Gram matrix.
    """
    if M.shape[1] <= M.shape[0]:
        w, V = np.linalg.eigh(M.T @ M)
        if w[-1] <= 0:
            return None, None
        u = M @ V[:, -1]
        norm = np.linalg.norm(u)
        if norm <= 0:
            return None, None
        u /= norm
    else:
        w, U = np.linalg.eigh(M @ M.T)
        if w[-1] <= 0:
            return None, None
        u = U[:, -1]
    return u, u @ M


def ksvd_train(training: np.ndarray, atom_count: int, sparsity: int, iterations: int = 30,
               *, init: str = "first", seed: int | None = None,
               class_id: str | None = None) -> ClassDictionary:
    """Learn a dictionary for one class.

    ``training`` holds one sample per column. The initial dictionary is the
    first ``atom_count`` columns (or seeded random columns with
    ``init="random"``), normalized. ``history`` records the reconstruction
    error before and after every dictionary-update stage.
    """
    S = np.asarray(training, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] < 1:
        raise InvalidInputError("need at least one training sample", module="sparse")
    m, N = S.shape
    if not np.any(S):
        raise InvalidInputError("training matrix is all zeros", module="sparse")
    if atom_count < 1 or not 1 <= sparsity <= atom_count:
        raise InvalidParameterError("need 1 <= sparsity <= atom_count", module="sparse")
    if N < atom_count:
        log.warning("class %s: %d samples for %d atoms", class_id, N, atom_count)
    if init == "first":
        cols = np.arange(atom_count) % N
    elif init == "random":
        rng = np.random.default_rng(seed)
        cols = rng.choice(N, size=atom_count, replace=N < atom_count)
    else:
        raise InvalidParameterError(f"unknown init {init!r}", module="sparse")
    D = S[:, cols].copy()
    norms = np.linalg.norm(D, axis=0)
    zero = norms <= 0
    if np.any(zero):
        # zero samples cannot seed an atom; fall back to the largest samples
        big = np.argsort(-np.linalg.norm(S, axis=0), kind="stable")
        D[:, zero] = S[:, big[: zero.sum()] % N]
        norms = np.linalg.norm(D, axis=0)
    D /= norms
    history = []
    tau = min(sparsity, m)
    for _ in range(iterations):
        X = kernels.omp_batch(D, S, tau, 0.0)
        before = reconstruction_error(S, D, X)
        _update_atoms(S, D, X)
        history.append((before, reconstruction_error(S, D, X)))
    return ClassDictionary(D, class_id, history)


# --- l1 solver ------------------------------------------------------------

def _dual_value(A, y, r, epsilon):
    """Dual objective of min ||x||_1 s.t. ||y - Ax|| <= eps at the scaled residual."""
    scale = np.max(np.abs(A.T @ r)) if r.size else 0.0
    if scale <= 0:
        return 0.0
    u = r / scale
    return float(u @ y - epsilon * np.linalg.norm(u))


def bpdn_solve(dictionary: np.ndarray, y: np.ndarray, epsilon: float, max_iter: int | None = None,
               conv_tol: float = 1e-7) -> SparseCode:
    """Minimize ||x||_1 subject to ||y - A x||_2 <= epsilon.

    Follows the exact LASSO regularization path from x = 0 downward in the
    penalty until the residual norm first reaches ``epsilon``; the residual
    norm is monotone along the path, so that point solves the constrained
    problem. Optimality is certified by the duality gap relative to the
    objective, ``gap <= conv_tol * max(1, ||x||_1)``. Raises
    :class:`NonConvergenceError` carrying the last iterate when the path
    budget runs out, the target residual is unreachable, or the gap
    exceeds ``conv_tol``.
    """
    A = np.asarray(dictionary, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive", module="sparse")
    m, n = A.shape
    if y.shape != (m,):
        raise InvalidInputError(f"y must have length {m}", module="sparse")
    if max_iter is None:
        max_iter = 20 * n + 100
    x = np.zeros(n)
    ynorm = float(np.linalg.norm(y))
    if ynorm <= epsilon:
        return SparseCode.from_coefficients(x, residual_norm=ynorm)

    x, it, done = kernels.lasso_homotopy(A, y, float(epsilon), int(max_iter))

    code = SparseCode.from_coefficients(x, iterations=it)
    r = y - A @ code.coefficients
    code.residual_norm = float(np.linalg.norm(r))
    l1 = float(np.abs(code.coefficients).sum())
    code.duality_gap = l1 - _dual_value(A, y, r, epsilon)
    if not done:
        code.converged = False
        raise NonConvergenceError(
            "l1 path ended before reaching the residual target" if it < max_iter
            else f"l1 path exceeded {max_iter} breakpoints", code, module="sparse")
    if code.residual_norm > epsilon + 1e-6 or code.duality_gap > conv_tol * max(1.0, l1):
        code.converged = False
        raise NonConvergenceError(
            f"certificate failed (residual {code.residual_norm:.3g}, gap {code.duality_gap:.3g})",
            code, module="sparse")
    return code
