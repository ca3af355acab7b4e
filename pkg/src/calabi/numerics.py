"""Dense symmetric linear algebra for small dimensions.

Everything here targets matrices of size <= 8. The generalized
symmetric eigenproblem A v = lambda M v is reduced with a Cholesky
factor of M to a standard symmetric problem and solved by cyclic Jacobi
iteration; robustness and reproducibility matter more than speed at
these sizes. Eigenvectors are M-orthonormal, eigenvalues ascending, and
each vector's sign is fixed so its first entry of significant size is
positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotPositiveDefiniteError(ValueError):
    pass


def symmetrize(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Validate near-symmetry and return the symmetric part.

    The asymmetry must not exceed `tol` relative to the largest entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0)
    gap = np.max(np.abs(a - a.T)) if a.size else 0.0
    if gap > tol * scale:
        raise ValueError(f"matrix asymmetry {gap:.3e} exceeds tolerance")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns, M-orthonormal


def _jacobi(a: np.ndarray, sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi for a symmetric matrix. Returns (values, vectors)."""
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    for _ in range(sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= 1e-15 * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * norm:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    return np.diag(a).copy(), v


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.abs(col) > 1e-10 * max(np.max(np.abs(col)), 1e-300)
        idx = int(np.argmax(big))
        if col[idx] < 0:
            out[:, j] = -col
    return out


def solve_sym_eig_generalized(a: np.ndarray, m: np.ndarray) -> EigenResult:
    """Solve A v = lambda M v with symmetric A and positive definite M."""
    a = symmetrize(a)
    m = symmetrize(m)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("mass matrix is not positive definite") from None
    inv_l = np.linalg.inv(chol)
    b = inv_l @ a @ inv_l.T
    values, q = _jacobi(0.5 * (b + b.T))
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = _fix_signs(inv_l.T @ q[:, order])
    return EigenResult(values=values, vectors=vectors)


@dataclass(frozen=True)
class SubspaceBasis:
    rank: int
    basis: np.ndarray  # rows form an orthonormal basis of the span


def subspace_rank(vectors, tol: float = 1e-7) -> SubspaceBasis:
    """Numerical rank and orthonormal basis of the span of sample rows.

    Rank counts singular values above `tol` relative to the largest one.
    """
    stack = np.atleast_2d(np.asarray(vectors, dtype=float))
    if stack.size == 0:
        return SubspaceBasis(rank=0, basis=np.zeros((0, 0)))
    _, s, vh = np.linalg.svd(stack, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return SubspaceBasis(rank=0, basis=np.zeros((0, stack.shape[1])))
    rank = int(np.sum(s > tol * s[0]))
    return SubspaceBasis(rank=rank, basis=vh[:rank].copy())


def find_root_bisection(f, lo: float, hi: float, tol: float = 1e-12,
                        max_iter: int = 200) -> float:
    """Root of a continuous scalar function by bisection.

    The endpoints must straddle a sign change. Stops when the residual
    drops below `tol` or the interval collapses.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("bisection endpoints do not straddle a sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 1e-16 * max(abs(lo), abs(hi), 1.0):
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


def cluster_values(values, gap: float = 1e-6) -> list[tuple[float, list[int]]]:
    """Group sorted scalars into clusters separated by more than `gap`.

    Returns (mean, member indices) per cluster, ascending by mean.
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    clusters: list[list[int]] = []
    for idx in order:
        if clusters and values[idx] - values[clusters[-1][-1]] <= gap:
            clusters[-1].append(int(idx))
        else:
            clusters.append([int(idx)])
    return [(float(np.mean(values[c])), c) for c in clusters]


def metric_orthonormal_basis(h: np.ndarray) -> np.ndarray:
    """Columns b_i with b_i^T h b_j = delta_ij, for positive definite h."""
    h = symmetrize(h)
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("metric is not positive definite") from None
    return np.linalg.inv(chol).T
