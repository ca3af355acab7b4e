"""The Blaschke frame on the three anchor surfaces: a paraboloid
(parabolic, constant normal), a hyperbola branch (hyperbolic, normal
through the origin) and a quadric graph (vanishing difference tensor)."""

import numpy as np

from calabi import blaschke, dsl

paraboloid = dsl.parse_immersion(
    "immersion paraboloid { vars: u1, u2; "
    "components: (u1, u2, 0.5 * (u1*u1 + u2*u2)); }")
hyperbola = dsl.parse_immersion(
    "immersion h2 { vars: s; components: "
    "(0.7071067811865476 * exp(s), 0.7071067811865476 * exp(-s)); }")
quadric = dsl.parse_immersion(
    "immersion quadric { vars: u1, u2; "
    "components: (u1, u2, sqrt(1 + u1*u1 + u2*u2)); }")

for defn, point in ((paraboloid, (0.4, -0.1)), (quadric, (0.2, 0.3))):
    frame = blaschke.full_frame(defn, point)
    print(f"{defn.name:11s} H = {frame.H:+.12f}  "
          f"xi = {np.round(frame.xi, 9)}  "
          f"max|K| = {np.max(np.abs(frame.K)):.2e}")

# the hyperbola at scale 1/sqrt(2) is a unit hyperbolic sphere: the
# affine normal is the position vector itself
frame = blaschke.full_frame(hyperbola, (0.6,))
print(f"{hyperbola.name:11s} H = {frame.H:+.12f}  "
      f"|xi - phi| = {np.max(np.abs(frame.xi - frame.position)):.2e}")

# frame internals: metric, shape operator, cubic form
print("\nhyperbola metric h =", frame.h, " shape operator S =", frame.S)
print("cubic form C =", np.round(frame.C, 12))
