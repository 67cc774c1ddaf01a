"""A deliberately tiny arithmetic language for user-defined fields.

Grammar (Pratt-style precedence, lowest first)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom (('^' | '**') unary)?        # right associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Functions: ``sin``, ``cos``.  Constants: ``pi``.  ``-x^2`` parses as
``-(x^2)``, matching Python.  Scalar bindings are evaluated with :mod:`math`
(bit-identical to Python's own ``eval``); array bindings use numpy.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import InputError, NumericError

FUNCTIONS = ("sin", "cos")
CONSTANTS = {"pi": math.pi}

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^(),]))")


class ParseError(InputError):
    pass


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
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, Bin, Call]


def tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].strip()[:1]!r} at offset {pos}")
        number, name, op = m.groups()
        if number is not None:
            tokens.append(("num", number))
        elif name is not None:
            tokens.append(("name", name))
        else:
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, val = self.take()
        if (kind, val) != ("op", op):
            raise ParseError(f"expected {op!r} in {self.text!r}, got {val or 'end of input'!r}")

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise ParseError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return e

    def expr(self):
        left = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            left = Bin(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            left = Bin(op, left, self.unary())
        return left

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return Neg(self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if self.peek() == ("op", "("):
                raise ParseError(f"unknown function {val!r}")
            if val in CONSTANTS:
                return Num(CONSTANTS[val])
            return Var(val)
        if (kind, val) == ("op", "("):
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {val or 'end of input'!r} in {self.text!r}")


def parse(text: str) -> Expr:
    if not isinstance(text, str):
        raise ParseError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text).parse()


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg, Call)):
        return free_variables(e.arg)
    return free_variables(e.left) | free_variables(e.right)


def to_string(e: Expr) -> str:
    """Fully parenthesized rendering that re-parses to the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def _is_array(v):
    return isinstance(v, np.ndarray)


def evaluate(e: Expr, bindings: Mapping[str, object]):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise InputError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, bindings)
    if isinstance(e, Call):
        a = evaluate(e.arg, bindings)
        if _is_array(a):
            return np.sin(a) if e.fn == "sin" else np.cos(a)
        return math.sin(a) if e.fn == "sin" else math.cos(a)
    a = evaluate(e.left, bindings)
    b = evaluate(e.right, bindings)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if np.any(np.asarray(b) == 0.0):
            raise NumericError(f"division by zero in {to_string(e)}")
        return a / b
    if _is_array(a) or _is_array(b):
        with np.errstate(all="ignore"):
            out = np.power(np.asarray(a, dtype=float), b)
        if not np.all(np.isfinite(out)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b)):
            raise NumericError(f"invalid power in {to_string(e)}")
        return out
    try:
        out = a ** b
    except ZeroDivisionError:
        raise NumericError(f"zero raised to a negative power in {to_string(e)}") from None
    except OverflowError:
        raise NumericError(f"overflow in {to_string(e)}") from None
    if isinstance(out, complex):
        raise NumericError(f"negative base with fractional exponent in {to_string(e)}")
    return out


def eval_expression(e: Union[str, Expr], bindings: Mapping[str, object]):
    return evaluate(parse(e) if isinstance(e, str) else e, bindings)


def _simplify(e: Expr) -> Expr:
    if isinstance(e, Neg) and isinstance(e.arg, Num):
        return Num(-e.arg.value)
    if isinstance(e, Bin):
        l, r = e.left, e.right
        zero_l = isinstance(l, Num) and l.value == 0.0
        zero_r = isinstance(r, Num) and r.value == 0.0
        one_l = isinstance(l, Num) and l.value == 1.0
        one_r = isinstance(r, Num) and r.value == 1.0
        if e.op == "+":
            if zero_l:
                return r
            if zero_r:
                return l
        elif e.op == "-":
            if zero_r:
                return l
            if zero_l:
                return _simplify(Neg(r))
        elif e.op == "*":
            if zero_l or zero_r:
                return Num(0.0)
            if one_l:
                return r
            if one_r:
                return l
        elif e.op == "/":
            if zero_l:
                return Num(0.0)
            if one_r:
                return l
        if isinstance(l, Num) and isinstance(r, Num) and e.op in "+-*":
            return Num(evaluate(e, {}))
    return e


def diff(e: Expr, var: str) -> Expr:
    """Symbolic derivative; powers must have variable-free exponents."""
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0 if e.name == var else 0.0)
    if isinstance(e, Neg):
        return _simplify(Neg(diff(e.arg, var)))
    if isinstance(e, Call):
        inner = diff(e.arg, var)
        outer = Call("cos", e.arg) if e.fn == "sin" else Neg(Call("sin", e.arg))
        return _simplify(Bin("*", outer, inner))
    dl, dr = diff(e.left, var), diff(e.right, var)
    if e.op in "+-":
        return _simplify(Bin(e.op, dl, dr))
    if e.op == "*":
        return _simplify(Bin("+", _simplify(Bin("*", dl, e.right)), _simplify(Bin("*", e.left, dr))))
    if e.op == "/":
        num = _simplify(Bin("-", _simplify(Bin("*", dl, e.right)), _simplify(Bin("*", e.left, dr))))
        return _simplify(Bin("/", num, Bin("^", e.right, Num(2.0))))
    if free_variables(e.right):
        raise InputError("cannot differentiate a power with a variable exponent")
    n = e.right
    lowered = _simplify(Bin("-", n, Num(1.0)))
    return _simplify(Bin("*", _simplify(Bin("*", n, Bin("^", e.left, lowered))), dl))


def differentiable(e: Expr) -> bool:
    if isinstance(e, (Num, Var)):
        return True
    if isinstance(e, (Neg, Call)):
        return differentiable(e.arg)
    if e.op == "^" and free_variables(e.right):
        return False
    return differentiable(e.left) and differentiable(e.right)


def compile_scalar(text: str, variables) -> tuple:
    """Build vectorized (value, gradient) rules over points with columns ``variables``."""
    e = parse(text)
    variables = list(variables)
    unknown = free_variables(e) - set(variables)
    if unknown:
        raise InputError(f"expression {text!r} uses undeclared variables {sorted(unknown)}")

    def bind(p):
        p = np.asarray(p, dtype=float)
        return {v: p[..., i] for i, v in enumerate(variables)}

    def value(p):
        p = np.asarray(p, dtype=float)
        out = evaluate(e, bind(p))
        return np.broadcast_to(np.asarray(out, dtype=float), p.shape[:-1]).copy()

    if not differentiable(e):
        return value, None
    partials = [diff(e, v) for v in variables]

    def gradient(p):
        p = np.asarray(p, dtype=float)
        b = bind(p)
        cols = [np.broadcast_to(np.asarray(evaluate(d, b), dtype=float), p.shape[:-1]) for d in partials]
        return np.stack(cols, axis=-1)

    return value, gradient


def compile_vector(texts, variables):
    """Vectorized rule p -> stacked expression values (one column per expression)."""
    exprs = [parse(t) for t in texts]
    variables = list(variables)
    for t, e in zip(texts, exprs):
        unknown = free_variables(e) - set(variables)
        if unknown:
            raise InputError(f"expression {t!r} uses undeclared variables {sorted(unknown)}")

    def rule(p):
        p = np.asarray(p, dtype=float)
        b = {v: p[..., i] for i, v in enumerate(variables)}
        cols = [np.broadcast_to(np.asarray(evaluate(e, b), dtype=float), p.shape[:-1]) for e in exprs]
        return np.stack(cols, axis=-1)

    return rule


def compile_jacobian(texts, variables):
    """Vectorized symbolic Jacobian rule (rows: expressions, columns: variables), or None."""
    exprs = [parse(t) for t in texts]
    if not all(differentiable(e) for e in exprs):
        return None
    variables = list(variables)
    partials = [[diff(e, v) for v in variables] for e in exprs]

    def rule(p):
        p = np.asarray(p, dtype=float)
        b = {v: p[..., i] for i, v in enumerate(variables)}
        rows = [np.stack([np.broadcast_to(np.asarray(evaluate(d, b), dtype=float), p.shape[:-1])
                          for d in row], axis=-1) for row in partials]
        return np.stack(rows, axis=-2)

    return rule
