"""A small calculator language for closed-form scalar expressions.

System definitions declare connection coefficients, guards, resets,
potentials and curves as strings in this grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'pi' | NAME | FUNC '(' expr ')' | '(' expr ')'

so ``^`` binds tighter than unary minus (``-2^2 == -4``), ``^`` is
right-associative and the other binary operators are left-associative.
Angles are radians. Nodes are immutable; evaluation is a pure function of
the bindings.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ParseError, UnboundVariable, UnknownFunction

__all__ = [
    "Expression",
    "Num",
    "Var",
    "Const",
    "Neg",
    "BinOp",
    "Call",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "numeric_partial",
    "free_variables",
    "substitute",
    "compile_scalar",
    "compile_array",
]

Bindings = Mapping[str, float]


# -- scalar kernels shared by the tree walker and compiled closures --------


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError) as exc:
        raise DomainError(f"{a!r} ^ {b!r}: {exc}") from None


def _log(x: float) -> float:
    if x <= 0.0:
        raise DomainError(f"log of non-positive argument {x!r}")
    return math.log(x)


def _sqrt(x: float) -> float:
    if x < 0.0:
        raise DomainError(f"sqrt of negative argument {x!r}")
    return math.sqrt(x)


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        raise DomainError(f"exp overflow at {x!r}") from None


def _tan(x: float) -> float:
    return math.tan(x)


_SCALAR_FUNCS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": _tan,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": abs,
}

_ARRAY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

FUNCTIONS = frozenset(_SCALAR_FUNCS)
CONSTANTS = {"pi": math.pi}

_BINARY_SCALAR = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}

# printing precedence
_ADD, _MUL, _NEG, _POW, _ATOM = 1, 2, 3, 4, 5
_PREC = {"+": _ADD, "-": _ADD, "*": _MUL, "/": _MUL, "^": _POW}


# -- AST -------------------------------------------------------------------


class Expression:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return _unparse(self)

    def evaluate(self, bindings: Bindings) -> float:
        return evaluate(self, bindings)


@dataclass(frozen=True, slots=True)
class Num(Expression):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expression):
    name: str


@dataclass(frozen=True, slots=True)
class Const(Expression):
    name: str


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    operand: Expression


@dataclass(frozen=True, slots=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Call(Expression):
    func: str
    arg: Expression


# -- tokenizer and parser ----------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^])
  | (?P<lpar>\()
  | (?P<rpar>\))
    """,
    re.VERBOSE,
)


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf-8"))


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {source[pos]!r}", _byte_offset(source, pos)
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok=None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, _byte_offset(self.source, tok[2]))

    def unexpected(self) -> ParseError:
        kind, text, _ = self.peek()
        if kind == "end":
            return self.error("unexpected end of input")
        return self.error(f"unexpected token {text!r}")

    def parse(self) -> Expression:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.unexpected()
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, text, _ = tok = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if self.peek()[0] == "lpar":
                if text not in FUNCTIONS:
                    raise UnknownFunction(
                        f"unknown function {text!r}", _byte_offset(self.source, tok[2])
                    )
                self.advance()
                arg = self.expr()
                if self.peek()[0] != "rpar":
                    raise self.error("expected ')'")
                self.advance()
                return Call(text, arg)
            if text in FUNCTIONS:
                raise self.error(f"function {text!r} needs a parenthesized argument", tok)
            if text in CONSTANTS:
                return Const(text)
            return Var(text)
        if kind == "lpar":
            self.advance()
            node = self.expr()
            if self.peek()[0] != "rpar":
                raise self.error("expected ')'")
            self.advance()
            return node
        raise self.unexpected()


def parse(source: str) -> Expression:
    """Parse ``source`` into an expression tree.

    Raises ``ParseError`` (carrying the UTF-8 byte offset of the offending
    token) on malformed input and ``UnknownFunction`` for call syntax on an
    unrecognized name.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return _Parser(source).parse()


# -- printing ----------------------------------------------------------------


def _prec(node: Expression) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG
    if isinstance(node, Num) and math.copysign(1.0, node.value) < 0:
        return _NEG
    return _ATOM


def _wrap(node: Expression, parens: bool) -> str:
    text = _unparse(node)
    return f"({text})" if parens else text


def _unparse(node: Expression) -> str:
    if isinstance(node, Num):
        if not math.isfinite(node.value):
            raise ValueError(f"cannot print non-finite literal {node.value!r}")
        text = repr(float(node.value))
        return text[:-2] if text.endswith(".0") else text
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_unparse(node.arg)})"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _prec(node.operand) < _NEG)
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        if node.op == "^":
            left = _wrap(node.left, _prec(node.left) <= _POW)
            right = _wrap(node.right, _prec(node.right) < _NEG)
            return f"{left}^{right}"
        left = _wrap(node.left, _prec(node.left) < p)
        # equal precedence on the right needs parens: float + and * are not associative
        right = _wrap(node.right, _prec(node.right) <= p)
        sep = f" {node.op} " if p == _ADD else node.op
        return f"{left}{sep}{right}"
    raise TypeError(f"not an expression node: {node!r}")


# -- evaluation --------------------------------------------------------------


def evaluate(e: Expression, bindings: Bindings) -> float:
    """Evaluate ``e`` in IEEE double precision."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Neg):
        return -evaluate(e.operand, bindings)
    if isinstance(e, BinOp):
        return _BINARY_SCALAR[e.op](evaluate(e.left, bindings), evaluate(e.right, bindings))
    if isinstance(e, Call):
        return _SCALAR_FUNCS[e.func](evaluate(e.arg, bindings))
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e: Expression) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, Call):
        return free_variables(e.arg)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset()


def substitute(e: Expression, values: Mapping[str, float | Expression]) -> Expression:
    """Replace variables by literals (or by other expressions)."""
    if isinstance(e, Var):
        if e.name not in values:
            return e
        v = values[e.name]
        return v if isinstance(v, Expression) else Num(float(v))
    if isinstance(e, Neg):
        return Neg(substitute(e.operand, values))
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, values))
    if isinstance(e, BinOp):
        return BinOp(e.op, substitute(e.left, values), substitute(e.right, values))
    return e


def numeric_partial(
    e: Expression, var: str, bindings: Bindings, h: float | None = None
) -> float:
    """Central difference ``(e(x+h) - e(x-h)) / 2h`` in variable ``var``.

    The default step is ``1e-6 * max(1, |x|)``. The step actually used is
    the representable difference of the two abscissae.
    """
    if var not in bindings:
        raise UnboundVariable(var)
    x = float(bindings[var])
    if h is None:
        h = 1e-6 * max(1.0, abs(x))
    lo, hi = x - h, x + h
    env = dict(bindings)
    env[var] = hi
    f_hi = evaluate(e, env)
    env[var] = lo
    f_lo = evaluate(e, env)
    return (f_hi - f_lo) / (hi - lo)


# -- compilation -------------------------------------------------------------


def compile_scalar(e: Expression, names: Sequence[str]) -> Callable[..., float]:
    """Compile ``e`` to a closure taking positional values for ``names``.

    Uses the same scalar kernels as ``evaluate``, so results are
    bit-identical to the tree walk.
    """
    index = {n: i for i, n in enumerate(names)}
    inner = _compile(e, index)
    return lambda *args: inner(args)


def _compile(e: Expression, index: Mapping[str, int]):
    if isinstance(e, Num):
        v = e.value
        return lambda a: v
    if isinstance(e, Const):
        v = CONSTANTS[e.name]
        return lambda a: v
    if isinstance(e, Var):
        if e.name not in index:
            raise UnboundVariable(e.name)
        i = index[e.name]
        return lambda a: a[i]
    if isinstance(e, Neg):
        f = _compile(e.operand, index)
        return lambda a: -f(a)
    if isinstance(e, Call):
        fn = _SCALAR_FUNCS[e.func]
        f = _compile(e.arg, index)
        return lambda a: fn(f(a))
    if isinstance(e, BinOp):
        l, r = _compile(e.left, index), _compile(e.right, index)
        op = e.op
        if op == "+":
            return lambda a: l(a) + r(a)
        if op == "-":
            return lambda a: l(a) - r(a)
        if op == "*":
            return lambda a: l(a) * r(a)
        if op == "/":
            return lambda a: _div(l(a), r(a))
        return lambda a: _pow(l(a), r(a))
    raise TypeError(f"not an expression node: {e!r}")


def compile_array(e: Expression, names: Sequence[str]) -> Callable[..., np.ndarray]:
    """Compile ``e`` to a numpy-vectorized closure.

    Meant for scanning and sampling; values may differ from the scalar path
    in the last ulp. Floating-point faults raise ``DomainError``.
    """
    index = {n: i for i, n in enumerate(names)}
    inner = _compile_np(e, index)

    def run(*args):
        arrays = tuple(np.asarray(a, dtype=float) for a in args)
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        try:
            with np.errstate(all="raise", under="ignore"):
                out = inner(arrays)
        except FloatingPointError as exc:
            raise DomainError(str(exc)) from None
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    return run


def _compile_np(e: Expression, index: Mapping[str, int]):
    if isinstance(e, (Num, Const)):
        v = e.value if isinstance(e, Num) else CONSTANTS[e.name]
        return lambda a: v
    if isinstance(e, Var):
        if e.name not in index:
            raise UnboundVariable(e.name)
        i = index[e.name]
        return lambda a: a[i]
    if isinstance(e, Neg):
        f = _compile_np(e.operand, index)
        return lambda a: np.negative(f(a))
    if isinstance(e, Call):
        fn = _ARRAY_FUNCS[e.func]
        f = _compile_np(e.arg, index)
        return lambda a: fn(f(a))
    if isinstance(e, BinOp):
        l, r = _compile_np(e.left, index), _compile_np(e.right, index)
        ufunc = {
            "+": np.add,
            "-": np.subtract,
            "*": np.multiply,
            "/": np.divide,
            "^": np.power,
        }[e.op]
        return lambda a: ufunc(np.asarray(l(a), dtype=float), r(a))
    raise TypeError(f"not an expression node: {e!r}")
