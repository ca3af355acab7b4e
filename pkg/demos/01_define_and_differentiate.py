"""Define immersions in the small expression language and differentiate
them exactly with truncated Taylor arithmetic."""

import numpy as np

from calabi import dsl
from calabi.jets import eval_jets

source = """
immersion saddle {
  vars: u, v;
  components: (u, v, u * v + 0.25 * exp(u - v));
}
"""

saddle = dsl.parse_immersion(source)
print("parsed:", saddle.name, "with variables", saddle.vars)
print(dsl.print_immersion(saddle))

point = (0.3, -0.2)
print("value at", point, "->", np.round(dsl.eval_components(saddle, point), 6))

# jets carry every partial derivative up to the requested order
jets = eval_jets(saddle, point, order=3)
z = jets[2]
print("dz/du        =", z.partial((1, 0)))
print("dz/dv        =", z.partial((0, 1)))
print("d2z/dudv     =", z.partial((1, 1)))
print("d3z/du2dv    =", z.partial((2, 1)))

# the same expressions can be built programmatically
u = dsl.var("u")
bumped = dsl.ImmersionDef(
    name="bumped", vars=saddle.vars,
    components=tuple(dsl.mul(dsl.add(dsl.const(1.0), dsl.mul(u, u)), c)
                     for c in saddle.components))
print("\nprogrammatic variant:")
print(dsl.print_immersion(bumped))
