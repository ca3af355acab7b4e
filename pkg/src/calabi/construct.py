"""Calabi products of hyperbolic affine spheres.

Both constructions take hyperbolic affine spheres normalized to mean
curvature -1 (with the affine normal equal to the position) and produce
a sphere of the same kind one dimension higher.  With N = n2 + n3 + 2:

  pair product of factors of dimensions n2 and n3, n = n2 + n3 + 1:

      (c1 e^(a t) psi1(p),  c2 e^(-b t) psi2(q))

      c1 = sqrt(n2+1)/sqrt(N),  c2 = sqrt(n3+1)/sqrt(N),
      a = sqrt(n3+1)/sqrt(n2+1),  b = sqrt(n2+1)/sqrt(n3+1)

  point product of an n1-dimensional factor psi1 (the degenerate pair
  with a zero-dimensional second factor, n2 = n1, n3 = 0):

      (c1 e^(t/sqrt(n)) psi1(p),  c2 e^(-sqrt(n) t)),   n = n1 + 1,
      c1 = sqrt(n)/sqrt(n+1),  c2 = 1/sqrt(n+1)

The block coefficients are forced by the unimodular normalization: a
pair (c1, c2) yields mean curvature -1 exactly when c1^(n2+1) c2^(n3+1)
has the value above, leaving the one-parameter gauge freedom
d1^(n2+1) d2^(n3+1) = 1 (a translation of the axis parameter, so the
same surface).  The constructors emit the d1 = d2 = 1 gauge.  Products
carry provenance metadata so the decomposition round trip can
reconstruct the factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import blaschke, checks
from .blaschke import GeometryError
from .dsl import ImmersionDef, Provenance, build_scaled_embedding
from .jets import eval_jets


class FactorGaugeError(GeometryError):
    """Factor is not a hyperbolic affine sphere in the H = -1 gauge."""


class ProvenanceError(ValueError):
    """Operation needs product provenance metadata the def does not carry."""


@dataclass(frozen=True)
class SpectrumPrediction:
    """Eigenstructure of K_T along the product axis.

    lambda1 belongs to the axis direction T itself, lambda2 to the first
    factor block (multiplicity n2) and lambda3 to the second block
    (multiplicity n3; absent for point products, where the second block
    is a constant vector)."""

    kind: str  # "point" or "pair"
    n2: int
    n3: int
    lambda1: float
    lambda2: float
    lambda3: float | None


def predicted_spectrum(kind: str, n2: int, n3: int = 0) -> SpectrumPrediction:
    if kind == "point":
        n = n2 + 1
        lam2 = 1.0 / math.sqrt(n)
        return SpectrumPrediction(
            kind="point", n2=n2, n3=0,
            lambda1=-(n - 1) / math.sqrt(n), lambda2=lam2, lambda3=None,
        )
    if kind == "pair":
        lam2 = math.sqrt(n3 + 1) / math.sqrt(n2 + 1)
        lam3 = -math.sqrt(n2 + 1) / math.sqrt(n3 + 1)
        return SpectrumPrediction(
            kind="pair", n2=n2, n3=n3,
            lambda1=lam2 + lam3, lambda2=lam2, lambda3=lam3,
        )
    raise ValueError(f"unknown product kind {kind!r}")


def _default_gate_grid(nvars: int, span: float = 0.25, count: int = 2):
    axes = [np.linspace(-span, span, count) for _ in range(nvars)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _check_factor(defn: ImmersionDef, grid=None) -> None:
    if defn.ncomponents != defn.nvars + 1:
        raise FactorGaugeError(
            f"factor {defn.name!r} must be a hypersurface immersion "
            f"({defn.nvars + 1} components for {defn.nvars} variables)"
        )
    if grid is None:
        grid = _default_gate_grid(defn.nvars)
    report = checks.sphere_residual(defn, grid)
    frames = blaschke.frames_on_grid(defn, grid)
    worst_h = max(abs(fr.H + 1.0) for fr in frames)
    if not report.passed or worst_h > 1e-6:
        raise FactorGaugeError(
            f"factor {defn.name!r} is not an affine sphere with H = -1 "
            f"(sphere residual {report.max_residual:.3g}, |H+1| {worst_h:.3g})"
        )
    worst_xi = max(
        float(np.max(np.abs(fr.xi - fr.position))) for fr in frames
    )
    if worst_xi > 1e-6:
        raise FactorGaugeError(
            f"factor {defn.name!r} does not satisfy xi = phi "
            f"(offset {worst_xi:.3g}); recenter or rescale it first"
        )


def _axis_name(taken, preferred: str = "t") -> str:
    if preferred not in taken:
        return preferred
    k = 0
    while True:
        k += 1
        cand = f"{preferred}_{k}"
        if cand not in taken:
            return cand


def base_coefficients(kind: str, n2: int, n3: int = 0) -> tuple[float, float]:
    """Block coefficients (c1, c2) of the d1 = d2 = 1 gauge."""
    if kind == "point":
        n3 = 0
    elif kind != "pair":
        raise ValueError(f"unknown product kind {kind!r}")
    big_n = n2 + n3 + 2
    return (math.sqrt((n2 + 1) / big_n), math.sqrt((n3 + 1) / big_n))


def calabi_point(psi1: ImmersionDef, axis_var: str = "t",
                 check: bool = True, gate_grid=None) -> ImmersionDef:
    """Calabi product of a hyperbolic affine sphere with a point."""
    if check:
        _check_factor(psi1, gate_grid)
    n1 = psi1.nvars
    n = n1 + 1
    c1, c2 = base_coefficients("point", n1)
    axis = _axis_name(set(psi1.vars), axis_var)
    prov = Provenance(kind="point", n2=n1, n3=0, axis=axis,
                      factors=(psi1.name,))
    return build_scaled_embedding(
        [psi1, (1.0,)],
        weights=[(c1, 1.0 / math.sqrt(n)), (c2, -math.sqrt(n))],
        axis_var=axis,
        name=f"calabi_point_{psi1.name}",
        provenance=prov,
    )


def calabi_pair(psi1: ImmersionDef, psi2: ImmersionDef, axis_var: str = "t",
                check: bool = True, gate_grid=None) -> ImmersionDef:
    """Calabi product of two hyperbolic affine spheres."""
    if check:
        _check_factor(psi1, gate_grid)
        _check_factor(psi2, gate_grid)
    n2, n3 = psi1.nvars, psi2.nvars
    c1, c2 = base_coefficients("pair", n2, n3)
    rate1 = math.sqrt(n3 + 1) / math.sqrt(n2 + 1)
    rate2 = -math.sqrt(n2 + 1) / math.sqrt(n3 + 1)
    axis = _axis_name(set(psi1.vars) | set(psi2.vars), axis_var)
    prov = Provenance(kind="pair", n2=n2, n3=n3, axis=axis,
                      factors=(psi1.name, psi2.name))
    return build_scaled_embedding(
        [psi1, psi2],
        weights=[(c1, rate1), (c2, rate2)],
        axis_var=axis,
        name=f"calabi_pair_{psi1.name}_{psi2.name}",
        provenance=prov,
    )


def product_ode_identity(defn: ImmersionDef, grid,
                         tol: float = 1e-9) -> checks.CheckReport:
    """Second-order identity along the product axis.

    A Calabi product satisfies, componentwise,

        psi_tt = ((n3 - n2) / sqrt((n2+1)(n3+1))) psi_t + psi

    with n3 = 0 for point products. Requires provenance metadata; the
    report residual is the worst componentwise violation on the grid.
    """
    prov = defn.provenance
    if prov is None:
        raise ProvenanceError(
            "product_ode_identity needs a def produced by the Calabi "
            "constructors (no provenance metadata found)"
        )
    n2, n3 = prov.n2, prov.n3
    coeff = (n3 - n2) / math.sqrt((n2 + 1) * (n3 + 1))
    try:
        t_index = defn.vars.index(prov.axis)
    except ValueError:
        raise ProvenanceError(
            f"provenance axis {prov.axis!r} is not a variable of {defn.name!r}"
        ) from None
    res, pts = [], []
    for u in grid:
        comps = eval_jets(defn, u, order=2)
        worst = 0.0
        for c in comps:
            dt = c.deriv(t_index)
            dtt = dt.deriv(t_index).value
            worst = max(worst, abs(dtt - coeff * dt.value - c.value))
        res.append(worst)
        pts.append(np.asarray(u, dtype=float))
    return checks.CheckReport.from_samples("product_ode", res, pts, tol)


def ode_coefficient(defn: ImmersionDef) -> float:
    """The psi_t coefficient in the product ODE, from provenance."""
    prov = defn.provenance
    if prov is None:
        raise ProvenanceError("def carries no product provenance")
    return (prov.n3 - prov.n2) / math.sqrt((prov.n2 + 1) * (prov.n3 + 1))
