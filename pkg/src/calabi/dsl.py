"""Closed-form immersion definitions: AST, parser, printer, builders.

An immersion file holds one or more blocks of the form

    immersion h2 { vars: s; components: (0.5*exp(s), 0.5*exp(-s)); }

Expressions use +, -, *, / and ^ (constant exponent only), the functions
exp, log, sqrt, sin, cos, sinh, cosh, and '#' line comments. Printing is
canonical (fully parenthesized, floats in shortest round-trip form), so
print -> parse is the identity on parser-produced trees.

A comment of the form `#@product(kind=pair, n2=1, n3=1, axis=t,
factors=a|b)` immediately before a block is provenance metadata attached
by the Calabi product constructors; it survives a print/parse round
trip. All other comments are ignored.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from . import jets as _jets


class ImmersionSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class ImmersionValidationError(ValueError):
    pass


# --- AST ---------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Variable(Expr):
    name: str


@dataclass(frozen=True)
class Constant(Expr):
    value: float


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # only "neg"
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr


FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "sinh", "cosh")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


@dataclass(frozen=True)
class Provenance:
    """Construction metadata carried by Calabi products."""

    kind: str  # "point" or "pair"
    n2: int
    n3: int
    axis: str
    factors: tuple[str, ...]

    def comment(self) -> str:
        facs = "|".join(self.factors)
        return (
            f"#@product(kind={self.kind}, n2={self.n2}, n3={self.n3}, "
            f"axis={self.axis}, factors={facs})"
        )


@dataclass(frozen=True)
class ImmersionDef:
    name: str
    vars: tuple[str, ...]
    components: tuple[Expr, ...]
    provenance: Provenance | None = field(default=None)

    def __post_init__(self):
        if not self.vars:
            raise ImmersionValidationError("immersion needs at least one variable")
        if len(set(self.vars)) != len(self.vars):
            raise ImmersionValidationError("duplicate variable names")
        for v in self.vars:
            if not _IDENT.fullmatch(v):
                raise ImmersionValidationError(f"invalid variable name {v!r}")
        if not self.components:
            raise ImmersionValidationError("immersion needs at least one component")
        declared = set(self.vars)
        for comp in self.components:
            for name in _free_vars(comp):
                if name not in declared:
                    raise ImmersionValidationError(
                        f"undeclared variable {name!r} in immersion {self.name!r}"
                    )
            _validate_expr(comp)

    @property
    def nvars(self) -> int:
        return len(self.vars)

    @property
    def ncomponents(self) -> int:
        return len(self.components)


def _free_vars(e: Expr) -> set[str]:
    if isinstance(e, Variable):
        return {e.name}
    if isinstance(e, Constant):
        return set()
    if isinstance(e, Unary):
        return _free_vars(e.arg)
    if isinstance(e, Binary):
        return _free_vars(e.left) | _free_vars(e.right)
    if isinstance(e, Call):
        return _free_vars(e.arg)
    raise TypeError(f"not an expression node: {e!r}")


def _validate_expr(e: Expr) -> None:
    if isinstance(e, Binary):
        if e.op not in ("+", "-", "*", "/", "^"):
            raise ImmersionValidationError(f"unknown operator {e.op!r}")
        if e.op == "^" and not isinstance(e.right, Constant):
            raise ImmersionValidationError("exponent must be a constant")
        _validate_expr(e.left)
        _validate_expr(e.right)
    elif isinstance(e, Unary):
        if e.op != "neg":
            raise ImmersionValidationError(f"unknown unary operator {e.op!r}")
        _validate_expr(e.arg)
    elif isinstance(e, Call):
        if e.fn not in FUNCTIONS:
            raise ImmersionValidationError(f"unknown function {e.fn!r}")
        _validate_expr(e.arg)
    elif not isinstance(e, (Variable, Constant)):
        raise TypeError(f"not an expression node: {e!r}")


# --- builders ------------------------------------------------------------


def var(name: str) -> Variable:
    return Variable(name)


def const(value: float) -> Constant:
    return Constant(float(value))


def neg(e: Expr) -> Expr:
    if isinstance(e, Constant):
        return Constant(-e.value)
    return Unary("neg", e)


def add(a: Expr, b: Expr) -> Expr:
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    return Binary("/", a, b)


def powc(base: Expr, exponent: float) -> Expr:
    return Binary("^", base, const(exponent))


def call(fn: str, arg: Expr) -> Call:
    return Call(fn, arg)


# --- evaluation ----------------------------------------------------------


def eval_expr(e: Expr, env: dict, jet: bool = False):
    """Evaluate an expression over floats (jet=False) or jets."""
    if isinstance(e, Variable):
        try:
            return env[e.name]
        except KeyError:
            raise ImmersionValidationError(f"undeclared variable {e.name!r}") from None
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Unary):
        return -eval_expr(e.arg, env, jet)
    if isinstance(e, Binary):
        lhs = eval_expr(e.left, env, jet)
        if e.op == "^":
            return lhs ** e.right.value
        rhs = eval_expr(e.right, env, jet)
        if e.op == "+":
            return lhs + rhs
        if e.op == "-":
            return lhs - rhs
        if e.op == "*":
            return lhs * rhs
        return lhs / rhs
    if isinstance(e, Call):
        inner = eval_expr(e.arg, env, jet)
        if isinstance(inner, _jets.Jet):
            return _jets.jet_elementary(inner, e.fn)
        return getattr(math, e.fn)(inner)
    raise TypeError(f"not an expression node: {e!r}")


def eval_components(defn: ImmersionDef, point) -> list[float]:
    """Plain float evaluation of all components at a parameter point."""
    env = dict(zip(defn.vars, map(float, point)))
    return [eval_expr(c, env) for c in defn.components]


# --- printer -------------------------------------------------------------


def _fmt_number(v: float) -> str:
    if v != v or v in (float("inf"), float("-inf")):
        raise ImmersionValidationError(f"non-finite constant {v!r}")
    return repr(float(v))


def _print_expr(e: Expr) -> str:
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Constant):
        if e.value < 0 or (e.value == 0 and math.copysign(1.0, e.value) < 0):
            return f"(-{_fmt_number(-e.value)})"
        return _fmt_number(e.value)
    if isinstance(e, Unary):
        return f"(-{_print_expr(e.arg)})"
    if isinstance(e, Binary):
        if e.op == "^":
            return f"({_print_expr(e.left)}^{_fmt_number(e.right.value)})"
        return f"({_print_expr(e.left)}{e.op}{_print_expr(e.right)})"
    if isinstance(e, Call):
        return f"{e.fn}({_print_expr(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def print_immersion(defn: ImmersionDef) -> str:
    """Canonical single-block text. Reparsing yields an identical tree."""
    body = ", ".join(_print_expr(c) for c in defn.components)
    line = (
        f"immersion {defn.name} {{ vars: {', '.join(defn.vars)}; "
        f"components: ({body}); }}"
    )
    if defn.provenance is not None:
        return defn.provenance.comment() + "\n" + line
    return line


def print_program(defs) -> str:
    return "\n".join(print_immersion(d) for d in defs) + "\n"


# --- tokenizer / parser --------------------------------------------------

_TOKEN = re.compile(
    r"""(?P<ws>[ \t\r\n]+)
      | (?P<comment>\#[^\n]*)
      | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<sym>[{}();:,+\-*/^])
    """,
    re.VERBOSE,
)

_PROV = re.compile(
    r"#@product\(\s*kind=(?P<kind>\w+)\s*,\s*n2=(?P<n2>\d+)\s*,\s*n3=(?P<n3>\d+)"
    r"\s*,\s*axis=(?P<axis>\w+)\s*,\s*factors=(?P<factors>[^)]*)\)\s*$"
)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(source: str):
    tokens = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ImmersionSyntaxError(
                f"unexpected character {source[pos]!r}", line, col
            )
        kind = m.lastgroup
        text = m.group()
        if kind == "comment":
            pm = _PROV.match(text)
            if pm is not None:
                tokens.append(_Token("provenance", text, line, col))
        elif kind != "ws":
            tokens.append(_Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            raise ImmersionSyntaxError(
                f"expected {want!r}, found {tok.text or 'end of input'!r}",
                tok.line,
                tok.col,
            )
        return self.next()

    # expression grammar: expr ((+|-) term)*, term ((*|/) factor)*,
    # factor = base (^ number)?, base = number | ident | ( expr )
    #        | fn ( expr ) | - factor

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek().kind == "sym" and self.peek().text in "+-":
            op = self.next().text
            node = Binary(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek().kind == "sym" and self.peek().text in "*/":
            op = self.next().text
            node = Binary(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        node = self.parse_base()
        if self.peek().kind == "sym" and self.peek().text == "^":
            self.next()
            sign = 1.0
            if self.peek().kind == "sym" and self.peek().text == "-":
                self.next()
                sign = -1.0
            tok = self.expect("number")
            node = Binary("^", node, Constant(sign * float(tok.text)))
        return node

    def parse_base(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            return Constant(float(tok.text))
        if tok.kind == "ident":
            self.next()
            if tok.text in FUNCTIONS:
                self.expect("sym", "(")
                arg = self.parse_expr()
                self.expect("sym", ")")
                return Call(tok.text, arg)
            return Variable(tok.text)
        if tok.kind == "sym" and tok.text == "(":
            self.next()
            node = self.parse_expr()
            self.expect("sym", ")")
            return node
        if tok.kind == "sym" and tok.text == "-":
            self.next()
            return neg(self.parse_factor())
        raise ImmersionSyntaxError(
            f"expected expression, found {tok.text or 'end of input'!r}",
            tok.line,
            tok.col,
        )

    def parse_immersion_block(self) -> ImmersionDef:
        prov = None
        if self.peek().kind == "provenance":
            prov = _parse_provenance(self.next().text)
        kw = self.expect("ident")
        if kw.text != "immersion":
            raise ImmersionSyntaxError(
                f"expected 'immersion', found {kw.text!r}", kw.line, kw.col
            )
        name = self.expect("ident").text
        self.expect("sym", "{")
        v = self.expect("ident")
        if v.text != "vars":
            raise ImmersionSyntaxError(f"expected 'vars', found {v.text!r}", v.line, v.col)
        self.expect("sym", ":")
        names = [self.expect("ident").text]
        while self.peek().kind == "sym" and self.peek().text == ",":
            self.next()
            names.append(self.expect("ident").text)
        self.expect("sym", ";")
        c = self.expect("ident")
        if c.text != "components":
            raise ImmersionSyntaxError(
                f"expected 'components', found {c.text!r}", c.line, c.col
            )
        self.expect("sym", ":")
        self.expect("sym", "(")
        comps = [self.parse_expr()]
        while self.peek().kind == "sym" and self.peek().text == ",":
            self.next()
            comps.append(self.parse_expr())
        self.expect("sym", ")")
        self.expect("sym", ";")
        self.expect("sym", "}")
        try:
            return ImmersionDef(name, tuple(names), tuple(comps), prov)
        except ImmersionValidationError as exc:
            raise ImmersionValidationError(f"{exc} (near line {kw.line})") from None

    def parse_program(self) -> list[ImmersionDef]:
        defs = []
        while self.peek().kind != "eof":
            defs.append(self.parse_immersion_block())
        if not defs:
            tok = self.peek()
            raise ImmersionSyntaxError("empty immersion source", tok.line, tok.col)
        return defs


def _parse_provenance(text: str) -> Provenance:
    m = _PROV.match(text)
    factors = tuple(f for f in m.group("factors").split("|") if f)
    return Provenance(
        kind=m.group("kind"),
        n2=int(m.group("n2")),
        n3=int(m.group("n3")),
        axis=m.group("axis"),
        factors=factors,
    )


def parse_program(source: str) -> list[ImmersionDef]:
    """Parse a file that may contain several immersion blocks."""
    return _Parser(_tokenize(source)).parse_program()


def parse_immersion(source: str) -> ImmersionDef:
    """Parse a source holding exactly one immersion block."""
    defs = parse_program(source)
    if len(defs) != 1:
        raise ImmersionValidationError(
            f"expected exactly one immersion, found {len(defs)}"
        )
    return defs[0]


# --- structured assembly -------------------------------------------------


def _rename_expr(e: Expr, mapping: dict[str, str]) -> Expr:
    if isinstance(e, Variable):
        return Variable(mapping.get(e.name, e.name))
    if isinstance(e, Constant):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, _rename_expr(e.arg, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, _rename_expr(e.left, mapping), _rename_expr(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.fn, _rename_expr(e.arg, mapping))
    raise TypeError(f"not an expression node: {e!r}")


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    """Replace variables by expressions."""
    if isinstance(e, Variable):
        return mapping.get(e.name, e)
    if isinstance(e, Constant):
        return e
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.fn, substitute(e.arg, mapping))
    raise TypeError(f"not an expression node: {e!r}")


def build_scaled_embedding(
    defs,
    weights,
    axis_var: str,
    new_vars=None,
    name: str = "anon",
    provenance: Provenance | None = None,
) -> ImmersionDef:
    """Concatenate exponentially weighted blocks into one immersion.

    Each entry of `defs` is an ImmersionDef or a plain sequence of floats
    (a constant block). Entry k contributes the components

        coefficient_k * exp(rate_k * axis_var) * component

    with (coefficient_k, rate_k) = weights[k]. Identity weights are
    folded away: a coefficient of 1 adds no factor, a rate of 0 adds no
    exponential. Variable names are taken from the factors, renamed with
    numeric suffixes when they collide with the axis variable or with
    each other; `new_vars` overrides all factor variable names at once.
    Output variables are (axis_var, then factor variables in order).
    """
    if len(weights) != len(defs):
        raise ImmersionValidationError(
            f"{len(defs)} blocks but {len(weights)} weight pairs"
        )
    if not _IDENT.fullmatch(axis_var):
        raise ImmersionValidationError(f"invalid axis variable {axis_var!r}")

    factor_vars: list[list[str]] = []
    for d in defs:
        factor_vars.append(list(d.vars) if isinstance(d, ImmersionDef) else [])

    flat = [v for vs in factor_vars for v in vs]
    if new_vars is not None:
        if len(new_vars) != len(flat):
            raise ImmersionValidationError(
                f"new_vars has {len(new_vars)} names for {len(flat)} factor variables"
            )
        renamed_flat = list(new_vars)
    else:
        used = {axis_var}
        renamed_flat = []
        for v in flat:
            candidate = v
            k = 0
            while candidate in used:
                k += 1
                if k > 99:
                    raise ImmersionValidationError(
                        f"cannot find a fresh name for variable {v!r}"
                    )
                candidate = f"{v}_{k}"
            used.add(candidate)
            renamed_flat.append(candidate)
    if axis_var in renamed_flat:
        raise ImmersionValidationError(
            f"axis variable {axis_var!r} collides with a factor variable"
        )

    # re-split per factor
    renamed: list[list[str]] = []
    i = 0
    for vs in factor_vars:
        renamed.append(renamed_flat[i : i + len(vs)])
        i += len(vs)

    components: list[Expr] = []
    for d, (coefficient, rate), old, new in zip(defs, weights, factor_vars, renamed):
        if isinstance(d, ImmersionDef):
            mapping = dict(zip(old, new))
            block = [_rename_expr(c, mapping) for c in d.components]
        else:
            block = [const(v) for v in d]
            if not block:
                raise ImmersionValidationError("constant block must be nonempty")
        for comp in block:
            e = comp
            if rate != 0.0:
                e = mul(call("exp", mul(const(rate), var(axis_var))), e)
            if coefficient != 1.0:
                e = mul(const(coefficient), e)
            components.append(e)

    return ImmersionDef(
        name=name,
        vars=(axis_var, *renamed_flat),
        components=tuple(components),
        provenance=provenance,
    )
