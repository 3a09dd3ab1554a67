"""Expression language for Hamiltonians, core maps and test functions.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' integer)?
    base   := number | ident | '(' expr ')' | func '(' expr ')'
    func   := sin | cos | exp | log | sqrt

An expression can be printed back (``to_source``), differentiated
symbolically (``diff``), compiled to a numpy callable (``compile_expr``) and
lowered to a :class:`~microgen.jetcalc.Jet` (``lower_to_jet``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ParseError, UsageError
from .jetcalc import Jet, coordinate_jets, jet_elementary

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Num | Var | Neg | BinOp | Pow | Call


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[a-zA-Z][a-zA-Z0-9]*)|(?P<op>[-+*/^()]))"
)


def _byte_offset(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            start = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ParseError(f"unexpected character {src[start]!r}", _byte_offset(src, start))
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), _byte_offset(src, m.start(kind))))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(src, len(src))))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, value, offset = self.take()
        if value != text:
            found = value or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", offset)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.factor())
        node = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            kind, value, offset = self.take()
            if kind != "num" or not value.isdigit():
                raise ParseError("exponent must be a nonnegative integer", offset)
            node = Pow(node, int(value))
        return node

    def base(self) -> Expr:
        kind, value, offset = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                if value not in FUNCTIONS:
                    raise ParseError(f"unknown function {value!r}", offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            return Var(value)
        if (kind, value) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {value or 'end of input'!r}", offset)


def parse(src: str) -> Expr:
    p = _Parser(src)
    node = p.expr()
    kind, value, offset = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected trailing {value!r}", offset)
    return node


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    if isinstance(e, Num) and e.value < 0:
        return 0
    return 5


def to_source(e: Expr) -> str:
    if isinstance(e, Num):
        s = repr(float(e.value))
        return f"(-{s[1:]})" if e.value < 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        return "-" + (f"({inner})" if _prec(e.arg) < 3 else inner)
    if isinstance(e, Pow):
        inner = to_source(e.base)
        if not isinstance(e.base, (Var, Call)) and not (isinstance(e.base, Num) and e.base.value >= 0):
            inner = f"({inner})"
        return f"{inner}^{e.exponent}"
    p = _PREC[e.op]
    left = to_source(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = to_source(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, Pow):
        return free_vars(e.base)
    return free_vars(e.arg)


def is_polynomial(e: Expr) -> bool:
    """True when ``e`` uses only + - * ^ and division by constants."""
    if isinstance(e, (Num, Var)):
        return True
    if isinstance(e, Call):
        return False
    if isinstance(e, Neg):
        return is_polynomial(e.arg)
    if isinstance(e, Pow):
        return is_polynomial(e.base)
    if e.op == "/":
        return is_polynomial(e.left) and not free_vars(e.right)
    return is_polynomial(e.left) and is_polynomial(e.right)


# --------------------------------------------------------------------------
# symbolic differentiation (with light constant folding)


def _add(a: Expr, b: Expr) -> Expr:
    if a == Num(0.0):
        return b
    if b == Num(0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if b == Num(0.0):
        return a
    if a == Num(0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Expr, b: Expr) -> Expr:
    if a == Num(0.0) or b == Num(0.0):
        return Num(0.0)
    if a == Num(1.0):
        return b
    if b == Num(1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if a == Num(0.0):
        return a
    if b == Num(1.0):
        return a
    return BinOp("/", a, b)


def _pow(a: Expr, n: int) -> Expr:
    if n == 0:
        return Num(1.0)
    if n == 1:
        return a
    return Pow(a, n)


def diff(e: Expr, var: str) -> Expr:
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0 if e.name == var else 0.0)
    if isinstance(e, Neg):
        return _neg(diff(e.arg, var))
    if isinstance(e, BinOp):
        da, db = diff(e.left, var), diff(e.right, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        # quotient rule
        num = _sub(_mul(da, e.right), _mul(e.left, db))
        if num == Num(0.0):
            return num
        return _div(num, _pow(e.right, 2))
    if isinstance(e, Pow):
        db = diff(e.base, var)
        if e.exponent == 0 or db == Num(0.0):
            return Num(0.0)
        return _mul(_mul(Num(float(e.exponent)), _pow(e.base, e.exponent - 1)), db)
    da = diff(e.arg, var)
    if da == Num(0.0):
        return da
    a = e.arg
    if e.func == "sin":
        outer = Call("cos", a)
    elif e.func == "cos":
        outer = _neg(Call("sin", a))
    elif e.func == "exp":
        outer = e
    elif e.func == "log":
        return _div(da, a)
    else:  # sqrt
        return _div(da, _mul(Num(2.0), e))
    return _mul(outer, da)


# --------------------------------------------------------------------------
# numeric evaluation


def _codegen(e: Expr, names: dict[str, str]) -> str:
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        if e.name not in names:
            raise UsageError(f"unknown identifier {e.name!r}")
        return names[e.name]
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, names)})"
    if isinstance(e, Pow):
        return f"({_codegen(e.base, names)}**{e.exponent})"
    if isinstance(e, Call):
        return f"_np.{e.func}({_codegen(e.arg, names)})"
    return f"({_codegen(e.left, names)} {e.op} {_codegen(e.right, names)})"


def compile_expr(e: Expr, variables: Sequence[str]) -> Callable[..., float | np.ndarray]:
    """Return ``f(*values)`` evaluating ``e``; works on floats and numpy arrays."""
    names = {v: f"_v{i}" for i, v in enumerate(variables)}
    body = _codegen(e, names)
    args = ", ".join(names[v] for v in variables)
    # generated from a validated AST: identifiers are mapped, functions whitelisted
    raw = eval(f"lambda {args}: {body}", {"_np": np})

    def f(*values):
        out = raw(*values)
        if any(isinstance(v, np.ndarray) for v in values):
            shape = np.broadcast_shapes(*(np.shape(v) for v in values))
            return np.broadcast_to(out, shape).astype(float)
        return float(out)

    return f


def evaluate(e: Expr, env: dict[str, float]) -> float:
    names = sorted(env)
    return float(compile_expr(e, names)(*(env[n] for n in names)))


# --------------------------------------------------------------------------
# lowering to jets


def lower_to_jet(e: Expr, variables: Sequence[str], base: Sequence[float], order: int) -> Jet:
    """Evaluate ``e`` in jet arithmetic around ``base`` (coordinates centred there)."""
    variables = list(variables)
    if len(base) != len(variables):
        raise UsageError("base point must have one entry per variable")
    missing = free_vars(e) - set(variables)
    if missing:
        raise UsageError(f"unknown identifier(s) {sorted(missing)}")
    coords = dict(zip(variables, coordinate_jets(len(variables), order, base)))
    n = len(variables)

    def go(node: Expr) -> Jet:
        if isinstance(node, Num):
            return Jet.constant(node.value, n, order)
        if isinstance(node, Var):
            return coords[node.name]
        if isinstance(node, Neg):
            return -go(node.arg)
        if isinstance(node, Pow):
            return go(node.base) ** node.exponent
        if isinstance(node, Call):
            try:
                return jet_elementary(node.func, go(node.arg))
            except ValueError as exc:
                raise type(exc)(f"{exc} in {node.func}({to_source(node.arg)})") from exc
        a, b = go(node.left), go(node.right)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if not free_vars(node.right):
            return a / b.constant_term
        try:
            return a / b
        except ValueError as exc:
            raise type(exc)(f"{exc} in division by {to_source(node.right)}") from exc

    return go(e)
