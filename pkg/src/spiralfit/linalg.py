"""Dense symmetric eigen-solvers for the small (3x3, 7x7) systems used by the fitters.

Self-contained and deterministic: Cholesky by the textbook column algorithm,
eigendecomposition by cyclic Jacobi rotations.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite
from .geometry import canonicalize

MAX_SWEEPS = 50


def symmetrize(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def cholesky(A) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == A``.

    Raises NotPositiveDefinite when a pivot drops below ``1e-14 * trace(A) / order``.
    """
    A = symmetrize(A)
    k = A.shape[0]
    tol = 1e-14 * np.trace(A) / k
    L = np.zeros_like(A)
    for j in range(k):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol:
            raise NotPositiveDefinite(f"pivot {j} = {pivot:.3e} below tolerance {tol:.3e}")
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _off_norm(A: np.ndarray) -> float:
    off = A - np.diag(np.diag(A))
    return float(np.sqrt(np.sum(off * off)))


def sym_eig(A) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) by cyclic Jacobi."""
    A = symmetrize(A).copy()
    k = A.shape[0]
    if not np.all(np.isfinite(A)):
        raise NoConvergence("matrix contains non-finite entries")
    V = np.eye(k)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(k), V
    for _ in range(MAX_SWEEPS):
        if _off_norm(A) <= 1e-15 * scale:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) plane rotation
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        if _off_norm(A) > 1e-12 * scale:
            raise NoConvergence(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _solve_lower(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Forward substitution ``L X = B``."""
    X = np.array(B, dtype=float, copy=True)
    for i in range(L.shape[0]):
        X[i] = (X[i] - L[i, :i] @ X[:i]) / L[i, i]
    return X


def _solve_upper_t(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Back substitution ``L^T x = y``."""
    x = np.array(y, dtype=float, copy=True)
    for i in range(L.shape[0] - 1, -1, -1):
        x[i] = (x[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def gen_eig_smallest(B, C) -> tuple[float, np.ndarray]:
    """Eigenpair of ``B m = lambda C m`` whose eigenvalue is closest to zero.

    ``C`` must be positive definite. The problem is reduced to the standard
    symmetric matrix ``L^-1 B L^-T`` with ``C = L L^T``. The returned vector is
    canonical (unit norm, largest entry positive).
    """
    B = symmetrize(B)
    L = cholesky(C)
    Y = _solve_lower(L, B)            # L^-1 B
    H = _solve_lower(L, Y.T)          # L^-1 (L^-1 B)^T = L^-1 B L^-T
    w, U = sym_eig(H)
    i = int(np.argmin(np.abs(w)))
    m = _solve_upper_t(L, U[:, i])
    return float(w[i]), canonicalize(m)


def gen_eig_smallest_ridged(B, C, eps: float = 1e-12) -> tuple[float, np.ndarray]:
    """``gen_eig_smallest`` with one retry after adding ``eps * trace(C) / k`` to the diagonal."""
    try:
        return gen_eig_smallest(B, C)
    except NotPositiveDefinite:
        C = symmetrize(C)
        k = C.shape[0]
        return gen_eig_smallest(B, C + eps * np.trace(C) / k * np.eye(k))
