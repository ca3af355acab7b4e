"""Build Calabi products of unit hyperbolic spheres and verify the
advertised structure: the exact warping coefficients, the predicted
eigenvalues of the difference tensor, and the second-order ODE every
product satisfies along its axis."""

import math

import numpy as np

from calabi import construct, checks, dsl

h2 = dsl.parse_immersion(
    "immersion h2 { vars: s; components: "
    "(0.7071067811865476 * exp(s), 0.7071067811865476 * exp(-s)); }")
h2b = dsl.parse_immersion(
    "immersion h2b { vars: r; components: "
    "(0.7071067811865476 * exp(r), 0.7071067811865476 * exp(-r)); }")

point = construct.calabi_point(h2)
pair = construct.calabi_pair(h2, h2b)
mixed = construct.calabi_pair(h2, construct.calabi_point(h2b))

for kind, n2, n3 in (("point", 1, 0), ("pair", 1, 1), ("pair", 1, 2)):
    c1, c2 = construct.base_coefficients(kind, n2, n3)
    print(f"{kind} (n2={n2}, n3={n3}): c1 = {c1:.12f}, c2 = {c2:.12f}")

print()
for defn in (point, pair, mixed):
    prov = defn.provenance
    pred = construct.predicted_spectrum(prov.kind, prov.n2, prov.n3)
    print(f"{defn.name}: vars {defn.vars}")
    lam3 = "none (constant block)" if pred.lambda3 is None \
        else f"{pred.lambda3:+.6f}"
    print(f"  predicted lambda1 = {pred.lambda1:+.6f}, "
          f"lambda2 = {pred.lambda2:+.6f}, lambda3 = {lam3}")

    axes = [np.linspace(-0.2, 0.2, 2)] * defn.nvars
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")],
                    axis=1)
    sphere = checks.sphere_residual(defn, grid, tol=1e-7)
    ode = construct.product_ode_identity(defn, grid)
    coeff = construct.ode_coefficient(defn)
    print(f"  sphere residual {sphere.max_residual:.2e}, "
          f"ode residual {ode.max_residual:.2e} "
          f"(coefficient {coeff:+.6f})")

# the mixed product's coefficient is (n3 - n2)/sqrt((n2+1)(n3+1)) = 1/sqrt(6)
print("\n1/sqrt(6) =", 1 / math.sqrt(6))
