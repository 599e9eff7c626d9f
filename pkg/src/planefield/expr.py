"""Expressions over x, y, z: parsing, printing, differentiation and evaluation.

Grammar (whitespace is ignored)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := primary (("^" | "**") unary)?
    primary := number | "x" | "y" | "z" | func "(" expr ")" | "(" expr ")"
    func    := "sin" | "cos" | "exp" | "sqrt"

Integer literals are exact. A quotient of two exact constants folds into a
single rational literal, so ``2/3`` is one node. Decimal literals (``0.5``,
``1e-3``) stay floats. Exponents must reduce to an exact integer.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Union

import numpy as np

from .errors import (
    ConfigError,
    DomainError,
    ExprSyntaxError,
    NonIntegerExponent,
    ParseError,
    UnknownIdentifier,
)

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Expr",
    "VARIABLES",
    "FUNCTIONS",
    "parse",
    "to_text",
    "differentiate",
    "evaluate",
    "compile_exprs",
    "Domain",
    "FieldSpec",
    "field_from_mapping",
    "load_field",
]

VARIABLES = ("x", "y", "z")
FUNCTIONS = ("sin", "cos", "exp", "sqrt")

Number = Union[Fraction, float]


@dataclass(frozen=True)
class Const:
    value: Number


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # "add", "sub", "mul", "div", "pow"
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Unary, Binary]

ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "ident", "op", "end"
    text: str
    offset: int  # byte offset into the UTF-8 encoded source


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text
            )
        kind = m.lastgroup
        if kind != "ws":
            tok = m.group()
            tokens.append(_Token(kind, "^" if tok == "**" else tok, _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


# ------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str, tok: _Token | None = None) -> ExprSyntaxError:
        tok = tok or self.peek()
        return ExprSyntaxError(message, tok.offset, self.text)

    def expect(self, text: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            found = tok.text or "end of input"
            raise self.fail(f"expected {text!r}, found {found!r}")
        self.take()

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise self.fail(f"unexpected token {tok.text!r}")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = "add" if self.take().text == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            op = "mul" if self.take().text == "*" else "div"
            rhs = self.unary()
            if op == "div" and _is_exact(node) and _is_exact(rhs) and rhs.value != 0:
                node = Const(node.value / rhs.value)
            else:
                node = Binary(op, node, rhs)
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            operand = self.unary()
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Unary("neg", operand)
        if tok.kind == "op" and tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            exp_tok = self.peek()
            exponent = self.unary()
            value = _exact_value(exponent)
            if value is None or value.denominator != 1:
                raise NonIntegerExponent(
                    "exponent must be an integer constant", exp_tok.offset, self.text
                )
            if _is_exact(base) and (base.value != 0 or value >= 0):
                return Const(base.value ** int(value))
            return Binary("pow", base, Const(value))
        return base

    def primary(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            if re.fullmatch(r"\d+", tok.text):
                return Const(Fraction(int(tok.text)))
            return Const(float(tok.text))
        if tok.kind == "ident":
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(tok.text, arg)
            raise UnknownIdentifier(f"unknown identifier {tok.text!r}", tok.offset, self.text)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise self.fail(f"expected an operand, found {found!r}", tok)


def _is_exact(node: Expr) -> bool:
    return isinstance(node, Const) and isinstance(node.value, Fraction)


def _exact_value(node: Expr) -> Fraction | None:
    """Exact value of a variable-free rational subtree, else None."""
    if isinstance(node, Const):
        return node.value if isinstance(node.value, Fraction) else None
    if isinstance(node, Unary) and node.op == "neg":
        v = _exact_value(node.arg)
        return None if v is None else -v
    if isinstance(node, Binary):
        lhs, rhs = _exact_value(node.left), _exact_value(node.right)
        if lhs is None or rhs is None:
            return None
        if node.op == "add":
            return lhs + rhs
        if node.op == "sub":
            return lhs - rhs
        if node.op == "mul":
            return lhs * rhs
        if node.op == "div":
            return None if rhs == 0 else lhs / rhs
        if node.op == "pow" and (lhs != 0 or rhs >= 0):
            return lhs ** int(rhs)
    return None


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises ExprSyntaxError, UnknownIdentifier or NonIntegerExponent, each with
    the byte offset of the offending token.
    """
    return _Parser(text).parse()


# ------------------------------------------------------------------ printer

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYMBOL = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}


def _const_text(value: Number) -> str:
    if isinstance(value, Fraction):
        text = str(value)
        if value < 0 or value.denominator != 1:
            return f"({text})"
        return text
    text = repr(float(value))
    return f"({text})" if value < 0 or text.startswith("-") else text


def to_text(node: Expr) -> str:
    """Render ``node`` so that ``parse(to_text(node)) == node`` for parsed trees."""
    return _render(node, 0)


def _render(node: Expr, min_prec: int) -> str:
    if isinstance(node, Const):
        return _const_text(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            text = "-" + _render(node.arg, _PREC["pow"])
            prec = _PREC["neg"]
        else:
            return f"{node.op}({_render(node.arg, 0)})"
    elif node.op == "pow":
        text = f"{_render(node.left, 5)}^{_const_text(node.right.value)}"
        prec = _PREC["pow"]
    else:
        prec = _PREC[node.op]
        text = _render(node.left, prec) + _SYMBOL[node.op] + _render(node.right, prec + 1)
    return f"({text})" if prec < min_prec else text


# ----------------------------------------------------- smart constructors


def _is_value(node: Expr, value: int) -> bool:
    return isinstance(node, Const) and node.value == value


def _fold(value: Number) -> Const | None:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return Const(value)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if _is_value(a, 0):
        return b
    if _is_value(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(a.value + b.value) or Binary("add", a, b)
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_value(b, 0):
        return a
    if _is_value(a, 0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(a.value - b.value) or Binary("sub", a, b)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_value(a, 0) or _is_value(b, 0):
        return ZERO
    if _is_value(a, 1):
        return b
    if _is_value(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(a.value * b.value) or Binary("mul", a, b)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_value(b, 1):
        return a
    if _is_value(a, 0) and not _is_value(b, 0):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return _fold(a.value / b.value) or Binary("div", a, b)
    return Binary("div", a, b)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const) and (a.value != 0 or n > 0):
        return _fold(a.value ** n) or Binary("pow", a, Const(Fraction(n)))
    return Binary("pow", a, Const(Fraction(n)))


def func(name: str, a: Expr) -> Expr:
    return Unary(name, a)


# ---------------------------------------------------------- differentiation


def differentiate(node: Expr, var: str) -> Expr:
    """Exact partial derivative of ``node`` with respect to ``var``."""
    if var not in VARIABLES:
        raise ValueError(f"cannot differentiate with respect to {var!r}")
    return _diff(node, var)


def _diff(node: Expr, v: str) -> Expr:
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == v else ZERO
    if isinstance(node, Unary):
        du = _diff(node.arg, v)
        if _is_value(du, 0):
            return ZERO
        u = node.arg
        if node.op == "neg":
            return neg(du)
        if node.op == "sin":
            return mul(func("cos", u), du)
        if node.op == "cos":
            return neg(mul(func("sin", u), du))
        if node.op == "exp":
            return mul(func("exp", u), du)
        if node.op == "sqrt":
            return div(du, mul(Const(Fraction(2)), func("sqrt", u)))
        raise ValueError(f"unknown function {node.op!r}")
    u, w = node.left, node.right
    if node.op == "pow":
        n = int(w.value)
        return mul(mul(Const(Fraction(n)), power(u, n - 1)), _diff(u, v))
    du, dw = _diff(u, v), _diff(w, v)
    if node.op == "add":
        return add(du, dw)
    if node.op == "sub":
        return sub(du, dw)
    if node.op == "mul":
        return add(mul(du, w), mul(u, dw))
    if node.op == "div":
        return div(sub(mul(du, w), mul(u, dw)), power(w, 2))
    raise ValueError(f"unknown operator {node.op!r}")


# --------------------------------------------------------------- evaluation


def evaluate(node: Expr, point: Iterable[float]) -> float:
    """Evaluate at a point. Raises DomainError naming the failing subexpression."""
    x, y, z = (float(t) for t in point)
    return _eval(node, {"x": x, "y": y, "z": z})


def _eval(node: Expr, env: Mapping[str, float]) -> float:
    if isinstance(node, Const):
        return float(node.value)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Unary):
        a = _eval(node.arg, env)
        if node.op == "neg":
            return -a
        if node.op == "sqrt" and a < 0:
            raise DomainError(
                f"sqrt of negative value {a!r} in {to_text(node)}", subexpression=to_text(node)
            )
        try:
            out = getattr(math, node.op)(a)
        except OverflowError:
            out = math.inf
    elif node.op == "pow":
        a = _eval(node.left, env)
        n = int(node.right.value)
        if a == 0 and n < 0:
            raise DomainError(
                f"division by zero in {to_text(node)}", subexpression=to_text(node)
            )
        try:
            out = a**n
        except OverflowError:
            out = math.inf
    else:
        a, b = _eval(node.left, env), _eval(node.right, env)
        if node.op == "add":
            out = a + b
        elif node.op == "sub":
            out = a - b
        elif node.op == "mul":
            out = a * b
        else:
            if b == 0:
                raise DomainError(
                    f"division by zero in {to_text(node)}", subexpression=to_text(node)
                )
            out = a / b
    if not math.isfinite(out):
        raise DomainError(f"non-finite value in {to_text(node)}", subexpression=to_text(node))
    return out


def _source(node: Expr) -> str:
    if isinstance(node, Const):
        return f"({float(node.value)!r})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        inner = _source(node.arg)
        return f"(-{inner})" if node.op == "neg" else f"_{node.op}({inner})"
    if node.op == "pow":
        return f"({_source(node.left)} ** {int(node.right.value)})"
    op = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[node.op]
    return f"({_source(node.left)} {op} {_source(node.right)})"


def compile_exprs(exprs: list[Expr], vectorized: bool) -> Callable[..., tuple]:
    """Generate one Python function ``f(x, y, z) -> tuple`` for all ``exprs``.

    The scalar flavour uses :mod:`math` on floats, the vectorized one numpy
    ufuncs on arrays. Neither checks the domain; callers test finiteness.
    """
    body = ", ".join(_source(e) for e in exprs)
    src = f"def _generated(x, y, z):\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    lib = np if vectorized else math
    namespace: dict[str, Any] = {f"_{name}": getattr(lib, name) for name in FUNCTIONS}
    exec(compile(src, "<planefield-expr>", "exec"), namespace)
    return namespace["_generated"]


# ---------------------------------------------------------------- FieldSpec


@dataclass(frozen=True)
class Domain:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ConfigError("domain bounds need three coordinates", "/domain")
        for i in range(3):
            if not (math.isfinite(self.lo[i]) and math.isfinite(self.hi[i])):
                raise ConfigError("domain bounds must be finite", "/domain")
            if not self.hi[i] > self.lo[i]:
                raise ConfigError(f"domain has no extent along axis {i}", f"/domain/max/{i}")

    def contains(self, point: np.ndarray, pad: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= np.asarray(self.lo) - pad) and np.all(p <= np.asarray(self.hi) + pad))

    def to_dict(self) -> dict[str, list[float]]:
        return {"min": list(self.lo), "max": list(self.hi)}


def _multi_indices(order: int) -> list[tuple[int, int, int]]:
    return [
        (i, j, order - i - j) for i in range(order, -1, -1) for j in range(order - i, -1, -1)
    ]


def _axes_to_multi(axes: tuple[int, ...]) -> tuple[int, int, int]:
    return (axes.count(0), axes.count(1), axes.count(2))


class FieldSpec:
    """The vector field (a, b, c) with its derivative table up to third order.

    Derivative arrays follow ``jac[..., i, j] = d xi_i / d x_j`` and likewise
    for the higher tensors, which are symmetric in the trailing indices.
    """

    MAX_ORDER = 3

    def __init__(
        self,
        a: Expr | str,
        b: Expr | str,
        c: Expr | str,
        domain: Domain | None = None,
        name: str = "",
    ) -> None:
        self.components = tuple(parse(e) if isinstance(e, str) else e for e in (a, b, c))
        self.domain = domain or Domain((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
        self.name = name
        self.table: dict[tuple[int, tuple[int, int, int]], Expr] = {}
        for comp, base in enumerate(self.components):
            self.table[(comp, (0, 0, 0))] = base
            for order in range(1, self.MAX_ORDER + 1):
                for multi in _multi_indices(order):
                    axis = next(k for k in range(3) if multi[k] > 0)
                    lower = list(multi)
                    lower[axis] -= 1
                    self.table[(comp, multi)] = differentiate(
                        self.table[(comp, tuple(lower))], VARIABLES[axis]
                    )
        self._compiled: dict[tuple[int, bool], Callable[..., tuple]] = {}

    @property
    def texts(self) -> tuple[str, str, str]:
        return tuple(to_text(e) for e in self.components)

    def derivative(self, comp: int, multi: tuple[int, int, int]) -> Expr:
        return self.table[(comp, tuple(multi))]

    def _func(self, order: int, vectorized: bool) -> Callable[..., tuple]:
        key = (order, vectorized)
        if key not in self._compiled:
            exprs = [self.table[(c, m)] for c in range(3) for m in _multi_indices(order)]
            self._compiled[key] = compile_exprs(exprs, vectorized)
        return self._compiled[key]

    def _raw(self, order: int, pts: np.ndarray) -> np.ndarray:
        """Values of all order-``order`` partials, shape (n, 3, #multi)."""
        count = len(_multi_indices(order))
        if pts.shape[0] == 1:
            x, y, z = (float(t) for t in pts[0])
            try:
                vals = self._func(order, False)(x, y, z)
            except (ZeroDivisionError, ValueError, OverflowError):
                self._locate_domain_error(order, pts[0])
                raise
            out = np.array(vals, dtype=float).reshape(1, 3, count)
        else:
            with np.errstate(all="ignore"):
                vals = self._func(order, True)(pts[:, 0], pts[:, 1], pts[:, 2])
            out = np.empty((pts.shape[0], 3 * count))
            for k, v in enumerate(vals):
                out[:, k] = v
            out = out.reshape(pts.shape[0], 3, count)
        if not np.all(np.isfinite(out)):
            bad = int(np.argwhere(~np.isfinite(out))[0][0])
            self._locate_domain_error(order, pts[bad])
            raise DomainError("non-finite field value", point=[float(t) for t in pts[bad]])
        return out

    def _locate_domain_error(self, order: int, point: np.ndarray) -> None:
        for c in range(3):
            for m in _multi_indices(order):
                evaluate(self.table[(c, m)], point)

    def jets(self, points: Any, order: int = 1) -> list[np.ndarray]:
        """Return [xi, jac, hess, third][: order + 1] evaluated at ``points``.

        ``points`` has shape (..., 3); the outputs carry the same leading shape.
        """
        if not 0 <= order <= self.MAX_ORDER:
            raise ValueError("order must be between 0 and 3")
        pts = np.asarray(points, dtype=float)
        lead = pts.shape[:-1]
        flat = pts.reshape(-1, 3)
        n = flat.shape[0]
        result = []
        for k in range(order + 1):
            raw = self._raw(k, flat)
            multis = _multi_indices(k)
            index = {m: i for i, m in enumerate(multis)}
            tensor = np.empty((n, 3) + (3,) * k)
            for axes in np.ndindex(*((3,) * k)):
                tensor[(slice(None), slice(None)) + axes] = raw[:, :, index[_axes_to_multi(axes)]]
            result.append(tensor.reshape(lead + (3,) + (3,) * k))
        return result

    def values(self, points: Any) -> np.ndarray:
        return self.jets(points, 0)[0]

    def scaled(self, factor: str, name: str = "") -> "FieldSpec":
        """The field multiplied by a scalar function given as an expression."""
        h = parse(factor)
        return FieldSpec(*(mul(h, e) for e in self.components), self.domain, name)

    def to_dict(self) -> dict[str, Any]:
        a, b, c = self.texts
        return {"a": a, "b": b, "c": c, "domain": self.domain.to_dict()}


def field_from_mapping(data: Mapping[str, Any], pointer: str = "", name: str = "") -> FieldSpec:
    """Build a FieldSpec from the JSON field schema, reporting JSON pointers."""
    if not isinstance(data, Mapping):
        raise ConfigError("field must be an object", pointer or "/")
    exprs = []
    for key in ("a", "b", "c"):
        if key not in data:
            raise ConfigError(f"missing component {key!r}", f"{pointer}/{key}")
        text = data[key]
        if not isinstance(text, str):
            raise ConfigError(f"component {key!r} must be a string", f"{pointer}/{key}")
        try:
            exprs.append(parse(text))
        except ParseError as err:
            err.pointer = f"{pointer}/{key}"
            err.details["pointer"] = err.pointer
            raise
    domain = None
    if "domain" in data:
        dom = data["domain"]
        if not isinstance(dom, Mapping) or "min" not in dom or "max" not in dom:
            raise ConfigError("domain needs 'min' and 'max'", f"{pointer}/domain")
        try:
            lo = tuple(float(t) for t in dom["min"])
            hi = tuple(float(t) for t in dom["max"])
        except (TypeError, ValueError):
            raise ConfigError("domain bounds must be numbers", f"{pointer}/domain") from None
        try:
            domain = Domain(lo, hi)
        except ConfigError as err:
            err.pointer = pointer + err.pointer
            err.details["pointer"] = err.pointer
            raise
    return FieldSpec(*exprs, domain=domain, name=name or str(data.get("name", "")))


def load_field(path: str | Path) -> FieldSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"field file not found: {path}", "") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"field file is not valid JSON: {err.msg}", "", line=err.lineno) from None
    return field_from_mapping(data, name=path.stem)
