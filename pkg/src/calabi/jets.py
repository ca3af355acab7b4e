"""Truncated multivariate Taylor (jet) arithmetic.

A jet stores the Taylor coefficients c_alpha = (d^alpha f / alpha!) of a
scalar function at a point, for all multi-indices |alpha| <= order. Orders
up to 4 and up to 8 variables are supported, which is what the Blaschke
pipeline needs (metric and connection live at order <= 2 below the input,
shape operator and curvature at order <= 4).

Arithmetic is exact truncation: the product of two jets of orders r and s
is the truncated Cauchy product at order min(r, s). Elementary functions
are applied by composing the univariate Taylor series of the function at
the constant term with the zero-constant part of the jet (Horner form,
which is exact for truncated series).

Multi-indices are enumerated in graded lexicographic order, so the
coefficients of every lower order form a prefix of the array and
truncation is a slice.
"""

from __future__ import annotations

import math
from itertools import combinations_with_replacement

import numpy as np

MAX_ORDER = 4
MAX_NVARS = 8

_SPACES: dict[tuple[int, int], "_JetSpace"] = {}


def _multi_indices(nvars: int, order: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(order + 1):
        block = set()
        for combo in combinations_with_replacement(range(nvars), deg):
            alpha = [0] * nvars
            for i in combo:
                alpha[i] += 1
            block.add(tuple(alpha))
        out.extend(sorted(block))
    return out


class _JetSpace:
    """Shared index tables for all jets with the same (nvars, order)."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        self.indices = _multi_indices(nvars, order)
        self.size = len(self.indices)
        self.pos = {alpha: k for k, alpha in enumerate(self.indices)}
        self.degrees = np.array([sum(a) for a in self.indices])
        self.factorials = np.array(
            [math.prod(math.factorial(ai) for ai in alpha) for alpha in self.indices],
            dtype=float,
        )
        ia, ib, iout = [], [], []
        for p, ap in enumerate(self.indices):
            dp = sum(ap)
            for q, aq in enumerate(self.indices):
                if dp + sum(aq) > order:
                    continue
                ia.append(p)
                ib.append(q)
                iout.append(self.pos[tuple(x + y for x, y in zip(ap, aq))])
        self.mul_a = np.array(ia)
        self.mul_b = np.array(ib)
        self.mul_out = np.array(iout)
        # d/dx_i maps the parent space onto the order-1 lower prefix
        self.deriv_src: list[np.ndarray] = []
        self.deriv_fac: list[np.ndarray] = []
        lower = [a for a in self.indices if sum(a) <= order - 1]
        for i in range(nvars):
            src, fac = [], []
            for alpha in lower:
                shifted = list(alpha)
                shifted[i] += 1
                src.append(self.pos[tuple(shifted)])
                fac.append(alpha[i] + 1)
            self.deriv_src.append(np.array(src, dtype=int))
            self.deriv_fac.append(np.array(fac, dtype=float))


def _space(nvars: int, order: int) -> _JetSpace:
    if not 1 <= nvars <= MAX_NVARS:
        raise ValueError(f"nvars must be in 1..{MAX_NVARS}, got {nvars}")
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must in 0..{MAX_ORDER}, got {order}")
    key = (nvars, order)
    if key not in _SPACES:
        _SPACES[key] = _JetSpace(nvars, order)
    return _SPACES[key]


class JetDomainError(ArithmeticError):
    """Elementary function applied outside its domain (log of a
    nonpositive value, fractional power at a nonpositive base, division
    by a jet whose value vanishes)."""


class Jet:
    __slots__ = ("space", "c")

    def __init__(self, space: _JetSpace, coeffs: np.ndarray):
        self.space = space
        self.c = coeffs

    # construction ---------------------------------------------------

    @staticmethod
    def constant(value: float, nvars: int, order: int) -> "Jet":
        sp = _space(nvars, order)
        c = np.zeros(sp.size)
        c[0] = value
        return Jet(sp, c)

    @staticmethod
    def variable(value: float, index: int, nvars: int, order: int) -> "Jet":
        sp = _space(nvars, order)
        c = np.zeros(sp.size)
        c[0] = value
        if order >= 1:
            e = tuple(1 if k == index else 0 for k in range(nvars))
            c[sp.pos[e]] = 1.0
        return Jet(sp, c)

    # inspection -----------------------------------------------------

    @property
    def nvars(self) -> int:
        return self.space.nvars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def value(self) -> float:
        return float(self.c[0])

    def coeff(self, alpha: tuple[int, ...]) -> float:
        """Taylor coefficient d^alpha f / alpha!."""
        return float(self.c[self.space.pos[tuple(alpha)]])

    def partial(self, alpha: tuple[int, ...]) -> float:
        """Partial derivative d^alpha f (coefficient times alpha!)."""
        k = self.space.pos[tuple(alpha)]
        return float(self.c[k] * self.space.factorials[k])

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        sp = _space(self.nvars, order)
        return Jet(sp, self.c[: sp.size].copy())

    def deriv(self, i: int) -> "Jet":
        """Jet of d f / d x_i, one order lower."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        sp = _space(self.nvars, self.order - 1)
        parent = self.space
        return Jet(sp, self.c[parent.deriv_src[i]] * parent.deriv_fac[i])

    def __repr__(self) -> str:
        return f"Jet(nvars={self.nvars}, order={self.order}, value={self.value!r})"

    # ring operations ------------------------------------------------

    def _coerce(self, other) -> tuple["Jet", "Jet"]:
        if isinstance(other, Jet):
            a, b = self, other
            if a.order > b.order:
                a = a.truncate(b.order)
            elif b.order > a.order:
                b = b.truncate(a.order)
            if a.nvars != b.nvars:
                raise ValueError("jet variable counts differ")
            return a, b
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self, Jet.constant(float(other), self.nvars, self.order)
        return NotImplemented, NotImplemented

    def __add__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return Jet(a.space, a.c + b.c)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return Jet(a.space, a.c - b.c)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return Jet(a.space, b.c - a.c)

    def __neg__(self):
        return Jet(self.space, -self.c)

    def __mul__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        sp = a.space
        prod = a.c[sp.mul_a] * b.c[sp.mul_b]
        return Jet(sp, np.bincount(sp.mul_out, weights=prod, minlength=sp.size))

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return a * _reciprocal(b)

    def __rtruediv__(self, other):
        a, b = self._coerce(other)
        if a is NotImplemented:
            return NotImplemented
        return b * _reciprocal(a)

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) or (
            isinstance(p, float) and p == int(p) and abs(p) < 64
        ):
            return _int_pow(self, int(p))
        return _real_pow(self, float(p))


def _compose(a: Jet, series: np.ndarray) -> Jet:
    """f(a) where series holds the univariate Taylor coefficients of f
    at a.value. Exact for truncated jets because (a - a0) has no
    constant term."""
    u = Jet(a.space, a.c.copy())
    u.c = u.c.copy()
    u.c[0] = 0.0
    r = a.order
    out = Jet.constant(series[r], a.nvars, r)
    for k in range(r - 1, -1, -1):
        out = out * u + series[k]
    return out


def _reciprocal(b: Jet) -> Jet:
    b0 = b.value
    if b0 == 0.0 or not math.isfinite(b0):
        raise JetDomainError("division by a jet with vanishing value")
    series = np.array([(-1.0) ** k / b0 ** (k + 1) for k in range(b.order + 1)])
    return _compose(b, series)


def _int_pow(a: Jet, p: int) -> Jet:
    if p < 0:
        return _reciprocal(_int_pow(a, -p))
    result = Jet.constant(1.0, a.nvars, a.order)
    base = a
    while p:
        if p & 1:
            result = result * base
        base = base * base if p > 1 else base
        p >>= 1
    return result


def _real_pow(a: Jet, p: float) -> Jet:
    a0 = a.value
    if a0 <= 0.0:
        raise JetDomainError(f"fractional power of nonpositive base {a0!r}")
    series = np.empty(a.order + 1)
    coef = 1.0
    for k in range(a.order + 1):
        series[k] = coef * a0 ** (p - k)
        coef *= (p - k) / (k + 1)
    return _compose(a, series)


def jet_exp(a: Jet) -> Jet:
    e = math.exp(a.value)
    series = np.array([e / math.factorial(k) for k in range(a.order + 1)])
    return _compose(a, series)


def jet_log(a: Jet) -> Jet:
    a0 = a.value
    if a0 <= 0.0:
        raise JetDomainError(f"log of nonpositive value {a0!r}")
    series = np.empty(a.order + 1)
    series[0] = math.log(a0)
    for k in range(1, a.order + 1):
        series[k] = (-1.0) ** (k + 1) / (k * a0**k)
    return _compose(a, series)


def jet_sqrt(a: Jet) -> Jet:
    return _real_pow(a, 0.5)


def jet_sin(a: Jet) -> Jet:
    a0 = a.value
    series = np.array(
        [math.sin(a0 + k * math.pi / 2) / math.factorial(k) for k in range(a.order + 1)]
    )
    return _compose(a, series)


def jet_cos(a: Jet) -> Jet:
    a0 = a.value
    series = np.array(
        [math.cos(a0 + k * math.pi / 2) / math.factorial(k) for k in range(a.order + 1)]
    )
    return _compose(a, series)


def jet_sinh(a: Jet) -> Jet:
    s, c = math.sinh(a.value), math.cosh(a.value)
    series = np.array(
        [(s if k % 2 == 0 else c) / math.factorial(k) for k in range(a.order + 1)]
    )
    return _compose(a, series)


def jet_cosh(a: Jet) -> Jet:
    s, c = math.sinh(a.value), math.cosh(a.value)
    series = np.array(
        [(c if k % 2 == 0 else s) / math.factorial(k) for k in range(a.order + 1)]
    )
    return _compose(a, series)


_ELEMENTARY = {
    "exp": jet_exp,
    "log": jet_log,
    "sqrt": jet_sqrt,
    "sin": jet_sin,
    "cos": jet_cos,
    "sinh": jet_sinh,
    "cosh": jet_cosh,
}


def jet_elementary(a: Jet, fn: str) -> Jet:
    """Apply a named elementary function to a jet."""
    try:
        impl = _ELEMENTARY[fn]
    except KeyError:
        raise ValueError(f"unknown elementary function {fn!r}") from None
    return impl(a)


def eval_jets(definition, point, order: int) -> list[Jet]:
    """Evaluate every component of an immersion as a jet at `point`.

    Returns one Jet per component, each carrying all partial
    derivatives of that component up to `order`.
    """
    from . import dsl

    names = definition.vars
    if len(point) != len(names):
        raise ValueError(
            f"point has {len(point)} coordinates, immersion has {len(names)} variables"
        )
    nvars = len(names)
    env = {
        name: Jet.variable(float(x), i, nvars, order)
        for i, (name, x) in enumerate(zip(names, point))
    }
    return [dsl.eval_expr(comp, env, jet=True) for comp in definition.components]
