"""Symbolic scalar expressions over a coordinate chart.

Expressions are immutable trees built from constants, coordinate references,
the unary functions ``sin cos exp ln sqrt``, negation, the four arithmetic
operators, and powers with constant exponents.  Derivatives are exact and stay
symbolic, so brackets of brackets can be differentiated again.

Grammar accepted by :func:`parse`::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right associative, exponent constant
    atom    := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := 'sin' | 'cos' | 'exp' | 'ln' | 'sqrt'
    NUMBER  := decimal literal, optional exponent part (1.5e-3)
    IDENT   := coordinate name from the chart

Numeric evaluation goes through generated Python code (one assignment per
distinct subtree); when that raises, the tree is walked to name the node that
left the domain.
"""
from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Chart", "Expression", "Const", "Var", "Unary", "Binary", "Pow",
    "ParseError", "EvaluationError", "ChartMismatchError",
    "parse", "differentiate", "gradient", "evaluate", "simplify",
    "substitute", "compile_expr", "compile_vector", "to_polynomial",
    "is_zero", "const", "ZERO", "ONE", "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")
MAX_POLY_DEGREE = 8
_MAX_POLY_TERMS = 5000


class ParseError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class EvaluationError(ArithmeticError):
    """A subexpression left its domain (division by zero, ln of a nonpositive...)."""

    def __init__(self, message: str, node: "Expression | None" = None):
        self.node = node
        super().__init__(message)


class ChartMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    """Ordered coordinate names of a chart."""

    names: tuple[str, ...]

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        if not names:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in {names}")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or name in FUNCTIONS:
                raise ValueError(f"invalid coordinate name {name!r}")
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def var(self, key: int | str) -> "Var":
        i = self.index(key) if isinstance(key, str) else int(key)
        return Var(i, self.names[i])

    def coordinates(self) -> list["Var"]:
        return [Var(i, name) for i, name in enumerate(self.names)]

    def parse(self, text: str) -> "Expression":
        return parse(text, self)

    def point(self, values: Sequence[float]) -> np.ndarray:
        z = np.asarray(values, dtype=float)
        if z.shape != (self.dim,):
            raise ChartMismatchError(f"point of shape {z.shape} on a chart of dimension {self.dim}")
        return z

    def check(self, e: "Expression") -> None:
        for i, name in e.variables():
            if i >= self.dim or self.names[i] != name:
                raise ChartMismatchError(f"coordinate {name!r} (index {i}) is not on chart {self.names}")


# --------------------------------------------------------------------------- nodes

class Expression:
    __slots__ = ("_hash", "_vars")
    precedence = 5

    def children(self) -> tuple["Expression", ...]:
        return ()

    def variables(self) -> frozenset[tuple[int, str]]:
        v = self._vars
        if v is None:
            v = frozenset()
            for c in self.children():
                v = v | c.variables()
            self._vars = v
        return v

    def is_const(self, value: float | None = None) -> bool:
        return False

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return to_str(self)

    def __repr__(self) -> str:
        return f"Expression({to_str(self)!r})"

    # builders (light folding only; see simplify for collection)
    def __add__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else add(self, other)

    def __radd__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else add(other, self)

    def __sub__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else sub(self, other)

    def __rsub__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else sub(other, self)

    def __mul__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else mul(self, other)

    def __rmul__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else mul(other, self)

    def __truediv__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else div(self, other)

    def __rtruediv__(self, other):
        other = _coerce(other)
        return NotImplemented if other is NotImplemented else div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        if isinstance(exponent, Expression):
            if not isinstance(exponent, Const):
                raise TypeError("exponent must be a constant")
            exponent = exponent.value
        return power(self, float(exponent))

    def __call__(self, z) -> float:
        return evaluate(self, z)


class Const(Expression):
    __slots__ = ("value",)

    @property
    def precedence(self):
        return 3 if self.value < 0 else 5

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant {value}")
        self.value = value + 0.0  # -0.0 -> 0.0
        self._hash = hash(("c", self.value))
        self._vars = frozenset()

    def is_const(self, value=None):
        return value is None or self.value == value

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        return isinstance(other, Const) and other.value == self.value


class Var(Expression):
    __slots__ = ("index", "name")

    def __init__(self, index: int, name: str):
        self.index = int(index)
        self.name = name
        self._hash = hash(("v", self.index, name))
        self._vars = frozenset({(self.index, name)})

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        return isinstance(other, Var) and other.index == self.index and other.name == self.name


class Unary(Expression):
    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expression):
        if op not in FUNCTIONS and op != "neg":
            raise ValueError(f"unknown unary op {op!r}")
        self.op = op
        self.arg = arg
        self._hash = hash(("u", op, arg._hash))
        self._vars = None

    @property
    def precedence(self):
        return 3 if self.op == "neg" else 5

    def children(self):
        return (self.arg,)

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        return self is other or (
            isinstance(other, Unary) and other._hash == self._hash
            and other.op == self.op and other.arg == self.arg)


class Binary(Expression):
    __slots__ = ("op", "left", "right")
    _PREC = {"+": 1, "-": 1, "*": 2, "/": 2}

    def __init__(self, op: str, left: Expression, right: Expression):
        if op not in self._PREC:
            raise ValueError(f"unknown binary op {op!r}")
        self.op = op
        self.left = left
        self.right = right
        self._hash = hash(("b", op, left._hash, right._hash))
        self._vars = None

    @property
    def precedence(self):
        return self._PREC[self.op]

    def children(self):
        return (self.left, self.right)

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        return self is other or (
            isinstance(other, Binary) and other._hash == self._hash and other.op == self.op
            and other.left == self.left and other.right == self.right)


class Pow(Expression):
    __slots__ = ("base", "exponent")
    precedence = 4

    def __init__(self, base: Expression, exponent: float):
        exponent = float(exponent)
        if not math.isfinite(exponent):
            raise ValueError("non-finite exponent")
        self.base = base
        self.exponent = exponent
        self._hash = hash(("p", base._hash, exponent))
        self._vars = None

    def children(self):
        return (self.base,)

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        return self is other or (
            isinstance(other, Pow) and other._hash == self._hash
            and other.exponent == self.exponent and other.base == self.base)


ZERO = Const(0.0)
ONE = Const(1.0)


def const(value: float) -> Const:
    return Const(value)


def _coerce(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    return NotImplemented


# ---------------------------------------------------------------- scalar semantics
# Shared by the tree walk and the generated code so both give identical bits.

def _int_exponent(n: float) -> int | None:
    if n.is_integer() and abs(n) <= 2 ** 31:
        return int(n)
    return None


def _apply_pow(base: float, exponent: float) -> float:
    n = _int_exponent(exponent)
    if n is not None:
        return base ** n
    return math.pow(base, exponent)


_UNARY_FUNCS = {
    "sin": math.sin, "cos": math.cos, "exp": math.exp, "ln": math.log, "sqrt": math.sqrt,
}


def _apply_unary(op: str, x: float) -> float:
    if op == "neg":
        return -x
    if op == "ln" and x <= 0.0:
        raise ValueError("math domain error")
    return _UNARY_FUNCS[op](x)


def _apply_binary(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    return a / b


def _safe_log(x):
    if x <= 0.0:
        raise ValueError("math domain error")
    return math.log(x)


# ------------------------------------------------------------------ smart builders

def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    if isinstance(a, Binary) and a.op == "*" and isinstance(a.left, Const):
        return mul(Const(-a.left.value), a.right)
    return Unary("neg", a)


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a.is_const(0.0):
        return b
    if b.is_const(0.0):
        return a
    if isinstance(b, Unary) and b.op == "neg":
        return sub(a, b.arg)
    return Binary("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b.is_const(0.0):
        return a
    if a.is_const(0.0):
        return neg(b)
    if a == b:
        return ZERO
    if isinstance(b, Unary) and b.op == "neg":
        return add(a, b.arg)
    return Binary("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a.is_const(0.0) or b.is_const(0.0):
        return ZERO
    if a.is_const(1.0):
        return b
    if b.is_const(1.0):
        return a
    if a.is_const(-1.0):
        return neg(b)
    if b.is_const(-1.0):
        return neg(a)
    return Binary("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if b.is_const(1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if a.is_const(0.0) and not b.is_const(0.0):
        return ZERO
    return Binary("/", a, b)


def power(a: Expression, exponent: float) -> Expression:
    exponent = float(exponent)
    if exponent == 1.0:
        return a
    if exponent == 0.0:
        return ONE
    if isinstance(a, Const):
        try:
            return Const(_apply_pow(a.value, exponent))
        except (ValueError, ZeroDivisionError, OverflowError):
            pass
    return Pow(a, exponent)


def func(op: str, a: Expression) -> Expression:
    if op == "neg":
        return neg(a)
    if isinstance(a, Const):
        try:
            return Const(_apply_unary(op, a.value))
        except (ValueError, OverflowError):
            pass
    return Unary(op, a)


# ------------------------------------------------------------------------ printing

def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _sum_terms(e: Expression) -> list[tuple[str, Expression]]:
    """Flatten a left-leaning +/- chain without recursion."""
    terms = []
    while isinstance(e, Binary) and e.op in "+-":
        terms.append((e.op, e.right))
        e = e.left
    terms.append(("+", e))
    terms.reverse()
    return terms


def to_str(e: Expression) -> str:
    """Infix text that :func:`parse` reads back to the same tree."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_str(e.arg)
            if e.arg.precedence < 4:
                inner = f"({inner})"
            return "-" + inner
        return f"{e.op}({to_str(e.arg)})"
    if isinstance(e, Pow):
        base = to_str(e.base)
        if e.base.precedence < 5 or isinstance(e.base, Pow):
            base = f"({base})"
        n = _fmt_number(e.exponent)
        if e.exponent < 0:
            n = f"({n})"
        return f"{base}^{n}"
    if isinstance(e, Binary) and e.op in "+-":
        parts = []
        for k, (op, term) in enumerate(_sum_terms(e)):
            s = to_str(term)
            if k == 0:
                if term.precedence < 1:
                    s = f"({s})"
                parts.append(s)
            else:
                if term.precedence <= 1:
                    s = f"({s})"
                parts.append(f" {op} {s}")
        return "".join(parts)
    assert isinstance(e, Binary)
    left, right = to_str(e.left), to_str(e.right)
    if e.left.precedence < 2:
        left = f"({left})"
    if e.right.precedence <= 2:
        right = f"({right})"
    return f"{left}{e.op}{right}" if e.op == "/" else f"{left}*{right}"


# ------------------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[col]!r}", col, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, chart: Chart):
        self.text = text
        self.chart = chart
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.text)

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {value!r}, found {what}", tok)

    def parse(self) -> Expression:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected {tok[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.unary())
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Unary("neg", arg)
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            tok = self.take()
            exponent = self.unary()
            if exponent.variables():
                raise self.error("exponent must be a constant", tok)
            try:
                value = evaluate(exponent, ())
            except EvaluationError as exc:
                raise self.error(f"exponent is undefined ({exc})", tok) from None
            return Pow(base, value)
        return base

    def atom(self):
        tok = self.take()
        kind, value, pos = tok
        if kind == "num":
            return Const(float(value))
        if kind == "id":
            if value in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise self.error(f"function {value!r} needs an argument in parentheses")
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            if value not in self.chart.names:
                raise ParseError(f"unknown identifier {value!r}", pos, self.text)
            return self.chart.var(value)
        if value == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"unexpected {what}", pos, self.text)


def parse(text: str, chart: Chart) -> Expression:
    """Parse infix text over the coordinates of ``chart``."""
    return _Parser(text, chart).parse()


# ------------------------------------------------------------------ differentiation

@functools.lru_cache(maxsize=65536)
def differentiate(e: Expression, i: int) -> Expression:
    """Exact partial derivative with respect to coordinate index ``i``."""
    if not any(j == i for j, _ in e.variables()):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Binary):
        if e.op in "+-":
            result = ZERO
            for op, term in _sum_terms(e):
                d = differentiate(term, i)
                result = add(result, d) if op == "+" else sub(result, d)
            return result
        a, b = e.left, e.right
        da, db = differentiate(a, i), differentiate(b, i)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        # quotient rule
        if db.is_const(0.0):
            return div(da, b)
        return sub(div(da, b), div(mul(a, db), power(b, 2.0)))
    if isinstance(e, Pow):
        db = differentiate(e.base, i)
        n = e.exponent
        return mul(mul(Const(n), power(e.base, n - 1.0)), db)
    assert isinstance(e, Unary)
    u = e.arg
    du = differentiate(u, i)
    if e.op == "neg":
        return neg(du)
    if e.op == "sin":
        return mul(func("cos", u), du)
    if e.op == "cos":
        return neg(mul(func("sin", u), du))
    if e.op == "exp":
        return mul(e, du)
    if e.op == "ln":
        return div(du, u)
    return div(du, mul(Const(2.0), e))  # sqrt


def gradient(e: Expression, chart: Chart) -> list[Expression]:
    return [differentiate(e, i) for i in range(chart.dim)]


# --------------------------------------------------------------------- evaluation

_NAMESPACE = {
    "_sin": math.sin, "_cos": math.cos, "_exp": math.exp, "_log": _safe_log,
    "_sqrt": math.sqrt, "_pow": math.pow,
}


def _postorder(roots: Sequence[Expression]) -> list[Expression]:
    seen = set()
    order = []
    stack = [(r, False) for r in reversed(roots)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node in seen:
            continue
        seen.add(node)
        stack.append((node, True))
        for c in reversed(node.children()):
            if c not in seen:
                stack.append((c, False))
    return order


def _codegen(exprs: Sequence[Expression]) -> str:
    names: dict[Expression, str] = {}
    lines = ["def _f(z):"]
    for node in _postorder(exprs):
        if node in names:
            continue
        if isinstance(node, Const):
            names[node] = f"({node.value!r})"
            continue
        if isinstance(node, Var):
            names[node] = f"z[{node.index}]"
            continue
        if isinstance(node, Unary):
            a = names[node.arg]
            rhs = f"-{a}" if node.op == "neg" else f"_{'log' if node.op == 'ln' else node.op}({a})"
        elif isinstance(node, Pow):
            n = _int_exponent(node.exponent)
            a = names[node.base]
            rhs = f"{a} ** ({n})" if n is not None else f"_pow({a}, {node.exponent!r})"
        else:
            rhs = f"{names[node.left]} {node.op} {names[node.right]}"
        tmp = f"t{len(lines)}"
        lines.append(f"    {tmp} = {rhs}")
        names[node] = tmp
    outs = ", ".join(names[e] for e in exprs)
    lines.append(f"    return ({outs},)")
    return "\n".join(lines)


@functools.lru_cache(maxsize=8192)
def _compiled(exprs: tuple[Expression, ...]):
    namespace = dict(_NAMESPACE)
    exec(compile(_codegen(exprs), "<preduce-expr>", "exec"), namespace)
    return namespace["_f"]


def _walk(e: Expression, z) -> float:
    """Reference evaluation that reports the failing node."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(z[e.index])
    try:
        if isinstance(e, Unary):
            x = _walk(e.arg, z)
            return _apply_unary(e.op, x)
        if isinstance(e, Pow):
            x = _walk(e.base, z)
            return _apply_pow(x, e.exponent)
        a = _walk(e.left, z)
        b = _walk(e.right, z)
        return _apply_binary(e.op, a, b)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(f"domain error in {to_str(e)}: {exc}", e) from None


def _diagnose(exprs, z, exc) -> EvaluationError:
    for e in exprs:
        try:
            _walk(e, z)
        except EvaluationError as err:
            return err
        except RecursionError:
            break
    return EvaluationError(f"domain error: {exc}")


def _as_args(z):
    if isinstance(z, np.ndarray):
        return z.tolist()
    return z


class CompiledVector:
    """Callable evaluating several expressions at once; returns a tuple of floats."""

    def __init__(self, exprs: Sequence[Expression], dim: int | None = None):
        self.exprs = tuple(exprs)
        self.dim = dim
        self._f = _compiled(self.exprs) if self.exprs else None

    def __call__(self, z) -> tuple[float, ...]:
        if self._f is None:
            return ()
        args = _as_args(z)
        if self.dim is not None and len(args) != self.dim:
            raise ChartMismatchError(f"point has {len(args)} coordinates, expected {self.dim}")
        try:
            return self._f(args)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise _diagnose(self.exprs, args, exc) from None
        except IndexError:
            raise ChartMismatchError("point has too few coordinates for this expression") from None


def compile_vector(exprs: Sequence[Expression], dim: int | None = None) -> CompiledVector:
    return CompiledVector(exprs, dim)


def compile_expr(e: Expression, dim: int | None = None):
    vec = CompiledVector((e,), dim)
    return lambda z: vec(z)[0]


def evaluate(e: Expression, z) -> float:
    """Value of ``e`` at the point ``z`` (a sequence of coordinate values)."""
    return CompiledVector((e,))(z)[0]


# --------------------------------------------------------------------- substitution

def substitute(e: Expression, replacements: dict[int, Expression]) -> Expression:
    """Replace coordinate ``i`` by ``replacements[i]`` (composition e∘φ)."""
    memo: dict[Expression, Expression] = {}
    for node in _postorder([e]):
        if isinstance(node, Const):
            out = node
        elif isinstance(node, Var):
            out = replacements.get(node.index, node)
        elif isinstance(node, Unary):
            out = func(node.op, memo[node.arg])
        elif isinstance(node, Pow):
            out = power(memo[node.base], node.exponent)
        else:
            a, b = memo[node.left], memo[node.right]
            out = {"+": add, "-": sub, "*": mul, "/": div}[node.op](a, b)
        memo[node] = out
    return memo[e]


# ------------------------------------------------------------ polynomial normal form
# A polynomial is a dict monomial -> coefficient; a monomial is a sorted tuple of
# (atom, exponent).  Atoms are coordinates or simplified non-polynomial subtrees.

def _atom_key(a: Expression):
    if isinstance(a, Var):
        return (0, a.index, "")
    return (1, 0, to_str(a))


def _mono_degree(m) -> int:
    return sum(k for _, k in m)


def _poly_degree(p) -> int:
    return max((_mono_degree(m) for m in p), default=0)


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    acc = dict(m1)
    for a, k in m2:
        acc[a] = acc.get(a, 0) + k
    return tuple(sorted(acc.items(), key=lambda ak: _atom_key(ak[0])))


def _poly_add(p, q, sign=1.0):
    r = dict(p)
    for m, c in q.items():
        v = r.get(m, 0.0) + sign * c
        if v == 0.0:
            r.pop(m, None)
        else:
            r[m] = v
    return r


def _poly_mul(p, q):
    r: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            v = r.get(m, 0.0) + c1 * c2
            if v == 0.0:
                r.pop(m, None)
            else:
                r[m] = v
    return r


def _poly_const(p) -> float | None:
    if not p:
        return 0.0
    if len(p) == 1 and () in p:
        return p[()]
    return None


def _atom_poly(a: Expression):
    if isinstance(a, Const):
        return {(): a.value} if a.value != 0.0 else {}
    return {((a, 1),): 1.0}


def _can_expand(p, q) -> bool:
    return (_poly_degree(p) + _poly_degree(q) <= MAX_POLY_DEGREE
            and len(p) * len(q) <= _MAX_POLY_TERMS)


def _to_poly(e: Expression, memo: dict):
    if e in memo:
        return memo[e]
    if isinstance(e, Const):
        p = {(): e.value} if e.value != 0.0 else {}
    elif isinstance(e, Var):
        p = {((e, 1),): 1.0}
    elif isinstance(e, Binary) and e.op in "+-":
        p = {}
        for op, term in _sum_terms(e):
            p = _poly_add(p, _to_poly(term, memo), 1.0 if op == "+" else -1.0)
    elif isinstance(e, Binary) and e.op == "*":
        a, b = _to_poly(e.left, memo), _to_poly(e.right, memo)
        if _can_expand(a, b):
            p = _poly_mul(a, b)
        else:
            p = _atom_poly(mul(_from_poly(a), _from_poly(b)))
    elif isinstance(e, Binary):
        a, b = _to_poly(e.left, memo), _to_poly(e.right, memo)
        c = _poly_const(b)
        if c is not None and c != 0.0:
            p = {m: v / c for m, v in a.items()}
        elif not a and c is None:
            p = {}
        else:
            p = _atom_poly(div(_from_poly(a), _from_poly(b)))
    elif isinstance(e, Pow):
        b = _to_poly(e.base, memo)
        n = _int_exponent(e.exponent)
        c = _poly_const(b)
        if c is not None:
            p = _atom_poly(power(Const(c), e.exponent))
        elif n is not None and n >= 0 and _poly_degree(b) * n <= MAX_POLY_DEGREE and len(b) ** n <= _MAX_POLY_TERMS:
            p = {(): 1.0}
            for _ in range(n):
                p = _poly_mul(p, b)
        else:
            p = _atom_poly(power(_from_poly(b), e.exponent))
    else:
        assert isinstance(e, Unary)
        a = _to_poly(e.arg, memo)
        if e.op == "neg":
            p = {m: -v for m, v in a.items()}
        else:
            p = _atom_poly(func(e.op, _from_poly(a)))
    memo[e] = p
    return p


def _mono_expr(m, coeff: float = 1.0) -> Expression:
    out = Const(coeff) if coeff != 1.0 else None
    for atom, k in m:
        f = power(atom, float(k))
        out = f if out is None else Binary("*", out, f)
    return out if out is not None else ONE


def _from_poly(p) -> Expression:
    if not p:
        return ZERO
    monos = sorted(p, key=lambda m: (_mono_degree(m), [(_atom_key(a), k) for a, k in m]))
    out = None
    for m in monos:
        c = p[m]
        term = _mono_expr(m, abs(c))
        if out is None:
            out = term if c > 0 else neg(term)
        else:
            out = Binary("+" if c > 0 else "-", out, term)
    return out


def simplify(e: Expression) -> Expression:
    """Constant folding, 0/1 identities and like-term collection.

    Non-polynomial subtrees are simplified recursively and then treated as
    opaque atoms of a polynomial.  The result evaluates to the same values as
    ``e`` wherever ``e`` is defined (up to rounding).
    """
    return _from_poly(_to_poly(e, {}))


def to_polynomial(e: Expression) -> dict[tuple[tuple[int, int], ...], float] | None:
    """Expanded monomial map ``{((index, power), ...): coeff}`` or None.

    Returns None when ``e`` is not a polynomial in the coordinates of total
    degree at most MAX_POLY_DEGREE.
    """
    p = _to_poly(e, {})
    out = {}
    for m, c in p.items():
        key = []
        for atom, k in m:
            if not isinstance(atom, Var):
                return None
            key.append((atom.index, k))
        out[tuple(key)] = c
    return out


def is_zero(e: Expression) -> bool:
    """True when simplification reduces ``e`` to the constant 0."""
    return simplify(e).is_const(0.0)
