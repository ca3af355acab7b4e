"""Equiaffine (Blaschke) structure of a parametrized hypersurface.

Given an immersion phi: U subset R^n -> R^(n+1) and a point u, the
pipeline produces the affine metric h, the affine normal xi, the induced
and Levi-Civita connections, the difference tensor K = nabla - hat
nabla, the cubic form C = h(K(.,.),.), the shape operator S with
D_X xi = -S X, the curvature of h, and the covariant derivative of K.

Everything is computed in exact truncated jet arithmetic: the component
jets of phi at order 4 are pushed through the same algebra one would
write on paper, and each differentiation lowers the jet order by one.
The orders work out so that S, the curvature tensor and hat nabla K are
still exact at the point; no finite differences are involved.

Index conventions for the stored arrays: tensors with one contravariant
slot keep it last, so gamma[i, j, k] is Gamma^k_ij, K[i, j, k] is
K^k_ij, Rhat[i, j, k, l] is the l-component of R(d_i, d_j) d_k, and
nabla_K[i, j, k, l] is the l-component of (hat nabla_{d_i} K)(d_j, d_k).
S[k, i] is the matrix with S(d_i) = S[k, i] d_k.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dsl import ImmersionDef
from .jets import Jet, eval_jets, jet_sqrt


class GeometryError(ValueError):
    pass


class DegenerateSurfaceError(GeometryError):
    """Tangent map drops rank or the second fundamental form degenerates."""


class IndefiniteMetricError(GeometryError):
    """The tentative metric is indefinite; the pipeline requires a
    locally convex (definite) hypersurface."""


class ArityError(GeometryError):
    """Component count is not (number of variables) + 1."""


# --- jet-valued dense linear algebra -------------------------------------


def _jet_det(rows: list[list[Jet]]):
    """Determinant by Laplace expansion with memoization on column
    subsets. Division free, so singular leading minors are harmless."""
    n = len(rows)
    cols0 = tuple(range(n))
    memo: dict[tuple[int, tuple[int, ...]], object] = {}

    def rec(r: int, cols: tuple[int, ...]):
        if r == n:
            return 1.0
        key = (r, cols)
        if key in memo:
            return memo[key]
        total = None
        for pos, j in enumerate(cols):
            sub = rec(r + 1, cols[:pos] + cols[pos + 1 :])
            term = rows[r][j] * sub
            if pos % 2 == 1:
                term = -term
            total = term if total is None else total + term
        memo[key] = total
        return total

    return rec(0, cols0)


def _jet_solve(a: list[list[Jet]], rhs: list[list[Jet]]) -> list[list[Jet]]:
    """Solve A X = B for jet matrices by Gaussian elimination with
    partial pivoting on the constant terms."""
    n = len(a)
    m = [[a[i][j] for j in range(n)] + [rhs[i][k] for k in range(len(rhs[0]))]
         for i in range(n)]
    width = n + len(rhs[0])
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(_val(m[r][col])))
        if abs(_val(m[piv][col])) < 1e-13:
            raise DegenerateSurfaceError("singular jet system (degenerate frame)")
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
        inv = 1.0 / m[col][col]
        for j in range(col, width):
            m[col][j] = m[col][j] * inv
        for r in range(n):
            if r == col:
                continue
            factor = m[r][col]
            if isinstance(factor, float) and factor == 0.0:
                continue
            for j in range(col, width):
                m[r][j] = m[r][j] - factor * m[col][j]
    return [[m[i][n + k] for k in range(width - n)] for i in range(n)]


def _val(x) -> float:
    return x.value if isinstance(x, Jet) else float(x)


def _vals(grid) -> np.ndarray:
    return np.array([[_val(x) for x in row] for row in grid])


# --- result types ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TentativeDecomposition:
    gtilde: np.ndarray       # second fundamental form w.r.t. the unit normal
    gamma_tilde: np.ndarray  # tentative Christoffel symbols, [i, j, k]
    dvol: float              # det of (tangent basis, unit normal)


@dataclass(frozen=True, eq=False)
class MetricNormal:
    h: np.ndarray
    xi: np.ndarray


@dataclass(frozen=True, eq=False)
class BlaschkeFrame:
    """Full second-order equiaffine data of an immersion at one point."""

    u: np.ndarray
    position: np.ndarray
    tangent: np.ndarray          # rows are d_i phi
    second: np.ndarray           # second[i, j] = d_i d_j phi, ambient vectors
    h: np.ndarray
    h_inv: np.ndarray
    xi: np.ndarray
    gamma: np.ndarray            # induced connection
    gamma_hat: np.ndarray        # Levi-Civita connection of h
    K: np.ndarray                # difference tensor
    C: np.ndarray                # cubic form, fully covariant
    S: np.ndarray                # shape operator as a matrix
    H: float                     # affine mean curvature trace(S)/n
    Rhat: np.ndarray             # curvature of h
    nabla_K: np.ndarray          # hat nabla K
    dh: np.ndarray               # dh[k, i, j] = d_k h_ij
    dK: np.ndarray               # dK[m, i, j, k] = d_m K^k_ij
    recon_residual: float        # | d_i d_j phi - Gamma d phi - h xi |
    normal_defect: float         # transversal part of d_i xi

    @property
    def n(self) -> int:
        return self.tangent.shape[0]


# --- pipeline -------------------------------------------------------------


def _component_jets(definition: ImmersionDef, u, order: int = 4) -> list[Jet]:
    n = definition.nvars
    if definition.ncomponents != n + 1:
        raise ArityError(
            f"hypersurface needs {n + 1} components for {n} variables, "
            f"got {definition.ncomponents}"
        )
    return eval_jets(definition, u, order)


def _tentative(comps: list[Jet], n: int):
    """Shared first stage: tangent jets, unit normal, gtilde, Dvol."""
    tang = [[comps[a].deriv(i) for a in range(n + 1)] for i in range(n)]
    second = [[[tang[i][a].deriv(j) for a in range(n + 1)] for j in range(n)]
              for i in range(n)]

    # generalized cross product: zhat_a = (-1)^(n+a) det(tangent minus column a)
    zhat = []
    for a in range(n + 1):
        minor = [[tang[i][b] for b in range(n + 1) if b != a] for i in range(n)]
        d = _jet_det(minor)
        zhat.append(d if (n + a) % 2 == 0 else -d)
    norm2 = zhat[0] * zhat[0]
    for a in range(1, n + 1):
        norm2 = norm2 + zhat[a] * zhat[a]
    if norm2.value < 1e-20:
        raise DegenerateSurfaceError("tangent map is degenerate at this point")
    norm = jet_sqrt(norm2)
    zeta = [z / norm for z in zhat]

    # decompose d_i d_j phi = gamma_tilde^k_ij d_k phi + gtilde_ij zeta
    basis = [[tang[i][a] for i in range(n)] + [zeta[a]] for a in range(n + 1)]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    rhs = [[second[i][j][a] for (i, j) in pairs] for a in range(n + 1)]
    sol = _jet_solve(basis, rhs)

    gam = [[[None] * n for _ in range(n)] for _ in range(n)]
    gt = [[None] * n for _ in range(n)]
    for col, (i, j) in enumerate(pairs):
        for k in range(n):
            gam[i][j][k] = sol[k][col]
            gam[j][i][k] = sol[k][col]
        gt[i][j] = sol[n][col]
        gt[j][i] = sol[n][col]

    gt_vals = _vals(gt)
    scale = max(np.max(np.abs(gt_vals)), 1e-30)
    eig = np.linalg.eigvalsh(0.5 * (gt_vals + gt_vals.T))
    flip = False
    if np.all(eig < -1e-12 * scale):
        flip = True
        zeta = [-z for z in zeta]
        gt = [[-x for x in row] for row in gt]
        gt_vals = -gt_vals
    elif not np.all(eig > 1e-12 * scale):
        raise IndefiniteMetricError(
            "tentative second fundamental form is not definite"
        )
    det_gt = _jet_det(gt)
    if abs(det_gt.value) < 1e-12:
        raise DegenerateSurfaceError("second fundamental form is degenerate")
    dvol = -norm if flip else norm
    return tang, second, zeta, gam, gt, det_gt, dvol


def tentative_decomposition(definition: ImmersionDef, u) -> TentativeDecomposition:
    """Second fundamental data with the Euclidean unit normal as the
    transversal, oriented so the form is positive definite."""
    n = definition.nvars
    comps = _component_jets(definition, u, order=2)
    _, _, _, gam, gt, _, dvol = _tentative(comps, n)
    gamma_tilde = np.array(
        [[[_val(gam[i][j][k]) for k in range(n)] for j in range(n)] for i in range(n)]
    )
    return TentativeDecomposition(
        gtilde=_vals(gt), gamma_tilde=gamma_tilde, dvol=_val(dvol)
    )


def _metric_and_levi(comps, n):
    tang, second, zeta, gam_t, gt, det_gt, dvol = _tentative(comps, n)

    # Blaschke normalization: h = (Dvol^2 / det gtilde)^(1/(n+2)) gtilde
    factor = (dvol * dvol / det_gt) ** (1.0 / (n + 2))
    h = [[factor * gt[i][j] for j in range(n)] for i in range(n)]

    ident = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    h_inv = _jet_solve(h, ident)

    dh = [[[h[i][j].deriv(k) for j in range(n)] for i in range(n)] for k in range(n)]
    gamma_hat = [[[None] * n for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            for k in range(n):
                acc = None
                for l in range(n):
                    term = h_inv[k][l] * (dh[i][j][l] + dh[j][i][l] - dh[l][i][j])
                    acc = term if acc is None else acc + term
                val = 0.5 * acc
                gamma_hat[i][j][k] = val
                gamma_hat[j][i][k] = val

    # affine normal: n xi = Laplace_h phi = h^ij (dd phi - gamma_hat d phi)
    xi = []
    for a in range(n + 1):
        acc = None
        for i in range(n):
            for j in range(n):
                inner = second[i][j][a]
                for k in range(n):
                    inner = inner - gamma_hat[i][j][k] * tang[k][a]
                term = h_inv[i][j] * inner
                acc = term if acc is None else acc + term
        xi.append(acc * (1.0 / n))
    return tang, second, zeta, h, h_inv, dh, gamma_hat, xi


def blaschke_metric_and_normal(definition: ImmersionDef, u) -> MetricNormal:
    """Affine metric and affine normal at a point (order-3 jets)."""
    n = definition.nvars
    comps = _component_jets(definition, u, order=3)
    _, _, _, h, _, _, _, xi = _metric_and_levi(comps, n)
    return MetricNormal(h=_vals(h), xi=np.array([_val(x) for x in xi]))


def full_frame(definition: ImmersionDef, u) -> BlaschkeFrame:
    """Complete Blaschke frame at a point (order-4 jets).

    Results are cached per (definition, point).
    """
    return _full_frame_cached(definition, tuple(float(x) for x in u))


@lru_cache(maxsize=4096)
def _full_frame_cached(definition: ImmersionDef, u: tuple) -> BlaschkeFrame:
    n = definition.nvars
    comps = _component_jets(definition, u, order=4)
    tang, second, zeta, h, h_inv, dh, gamma_hat, xi = _metric_and_levi(comps, n)

    # induced connection: decompose second derivatives against (d phi, xi)
    basis = [[tang[i][a] for i in range(n)] + [xi[a]] for a in range(n + 1)]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    rhs = [[second[i][j][a] for (i, j) in pairs] for a in range(n + 1)]
    sol = _jet_solve(basis, rhs)
    gamma = np.zeros((n, n, n))
    recon = 0.0
    for col, (i, j) in enumerate(pairs):
        for k in range(n):
            gamma[i, j, k] = _val(sol[k][col])
            gamma[j, i, k] = gamma[i, j, k]
        recon = max(recon, abs(_val(sol[n][col]) - _val(h[i][j])))

    K_jets = [[[None] * n for _ in range(n)] for _ in range(n)]
    for col, (i, j) in enumerate(pairs):
        for k in range(n):
            kij = sol[k][col] - gamma_hat[i][j][k]
            K_jets[i][j][k] = kij
            K_jets[j][i][k] = kij

    K = np.array([[[_val(K_jets[i][j][k]) for k in range(n)]
                   for j in range(n)] for i in range(n)])
    gamma_hat_vals = np.array(
        [[[_val(gamma_hat[i][j][k]) for k in range(n)] for j in range(n)]
         for i in range(n)]
    )
    h_vals = _vals(h)
    h_inv_vals = _vals(h_inv)
    C = np.einsum("ijl,lk->ijk", K, h_vals)

    # shape operator from d_i xi = -S^k_i d_k phi (+ transversal defect)
    dxi = [[xi[a].deriv(i) for a in range(n + 1)] for i in range(n)]
    basis_vals = np.array(
        [[_val(tang[i][a]) for i in range(n)] + [_val(xi[a])] for a in range(n + 1)]
    )
    S = np.zeros((n, n))
    defect = 0.0
    for i in range(n):
        coeffs = np.linalg.solve(basis_vals, np.array([_val(dxi[i][a])
                                                       for a in range(n + 1)]))
        S[:, i] = -coeffs[:n]
        defect = max(defect, abs(coeffs[n]))
    H = float(np.trace(S) / n)

    # derivative tensors
    dgh = np.array(
        [[[[_val(gamma_hat[i][j][k].deriv(m)) for k in range(n)]
           for j in range(n)] for i in range(n)] for m in range(n)]
    )
    dK = np.array(
        [[[[_val(K_jets[i][j][k].deriv(m)) for k in range(n)]
           for j in range(n)] for i in range(n)] for m in range(n)]
    )
    dh_vals = np.array(
        [[[_val(dh[k][i][j]) for j in range(n)] for i in range(n)] for k in range(n)]
    )

    # curvature: R[i,j,k,l] = d_i Gh[j,k,l] - d_j Gh[i,k,l]
    #            + Gh[j,k,m] Gh[i,m,l] - Gh[i,k,m] Gh[j,m,l]
    Rhat = (
        dgh
        - dgh.transpose(1, 0, 2, 3)
        + np.einsum("jkm,iml->ijkl", gamma_hat_vals, gamma_hat_vals)
        - np.einsum("ikm,jml->ijkl", gamma_hat_vals, gamma_hat_vals)
    )

    # hat nabla K: dK + Gh K - K Gh - K Gh, all slots
    nabla_K = (
        dK
        + np.einsum("iml,jkm->ijkl", gamma_hat_vals, K)
        - np.einsum("ijm,mkl->ijkl", gamma_hat_vals, K)
        - np.einsum("ikm,jml->ijkl", gamma_hat_vals, K)
    )

    second_vals = np.array(
        [[[_val(second[i][j][a]) for a in range(n + 1)] for j in range(n)]
         for i in range(n)]
    )
    return BlaschkeFrame(
        u=np.array(u, dtype=float),
        position=np.array([c.value for c in comps]),
        tangent=np.array([[_val(tang[i][a]) for a in range(n + 1)] for i in range(n)]),
        second=second_vals,
        h=h_vals,
        h_inv=h_inv_vals,
        xi=np.array([_val(x) for x in xi]),
        gamma=gamma,
        gamma_hat=gamma_hat_vals,
        K=K,
        C=C,
        S=S,
        H=H,
        Rhat=Rhat,
        nabla_K=nabla_K,
        dh=dh_vals,
        dK=dK,
        recon_residual=float(recon),
        normal_defect=float(defect),
    )


def frames_on_grid(definition: ImmersionDef, grid) -> list[BlaschkeFrame]:
    """Frames at every point of an iterable of parameter points."""
    return [full_frame(definition, u) for u in grid]


def clear_frame_cache() -> None:
    _full_frame_cached.cache_clear()
