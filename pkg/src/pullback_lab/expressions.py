"""A small arithmetic grammar for coefficient strings.

Grammar (whitespace ignored)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom (('^' | '**') unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Functions: sin, cos, exp (plus log and sqrt, used internally by derivatives).
Constants: pi, e. Parsed trees evaluate on numpy arrays and differentiate
symbolically, which gives forms built from strings an exact d.
"""
from __future__ import annotations

import math
import re

import numpy as np

from .errors import ExpressionError

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt}
_CONSTS = {"pi": math.pi, "e": math.e}
_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


class Node:
    """Expression tree node."""


class Num(Node):
    def __init__(self, v):
        self.v = float(v)

    def eval(self, env):
        return self.v

    def diff(self, var):
        return ZERO

    def __repr__(self):
        return repr(self.v)


class Var(Node):
    def __init__(self, name):
        self.name = name

    def eval(self, env):
        return env[self.name]

    def diff(self, var):
        return ONE if var == self.name else ZERO

    def __repr__(self):
        return self.name


class Bin(Node):
    def __init__(self, op, a, b):
        self.op, self.a, self.b = op, a, b

    def eval(self, env):
        x, y = self.a.eval(env), self.b.eval(env)
        if self.op == "+":
            return x + y
        if self.op == "*":
            return x * y
        if self.op == "/":
            return x / y
        return np.power(x, y)

    def diff(self, var):
        a, b = self.a, self.b
        da, db = a.diff(var), b.diff(var)
        if self.op == "+":
            return add(da, db)
        if self.op == "*":
            return add(mul(da, b), mul(a, db))
        if self.op == "/":
            return div(add(mul(da, b), neg(mul(a, db))), power(b, Num(2)))
        if isinstance(b, Num):
            return mul(mul(Num(b.v), power(a, Num(b.v - 1))), da)
        # general power: a^b (b' log a + b a'/a)
        return mul(self, add(mul(db, Fn("log", a)), div(mul(b, da), a)))

    def __repr__(self):
        return f"({self.a!r} {self.op} {self.b!r})"


class Neg(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, env):
        return -self.a.eval(env)

    def diff(self, var):
        return neg(self.a.diff(var))

    def __repr__(self):
        return f"-{self.a!r}"


class Fn(Node):
    def __init__(self, name, a):
        self.name, self.a = name, a

    def eval(self, env):
        return _FUNCS[self.name](self.a.eval(env))

    def diff(self, var):
        da = self.a.diff(var)
        if self.name == "sin":
            outer = Fn("cos", self.a)
        elif self.name == "cos":
            outer = neg(Fn("sin", self.a))
        elif self.name == "exp":
            outer = self
        elif self.name == "log":
            outer = div(ONE, self.a)
        else:
            outer = div(Num(0.5), self)
        return mul(outer, da)

    def __repr__(self):
        return f"{self.name}({self.a!r})"


ZERO, ONE = Num(0.0), Num(1.0)


def _is(n, v):
    return isinstance(n, Num) and n.v == v


def add(a, b):
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v + b.v)
    return Bin("+", a, b)


def neg(a):
    if isinstance(a, Num):
        return Num(-a.v)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def mul(a, b):
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v * b.v)
    return Bin("*", a, b)


def div(a, b):
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return Bin("/", a, b)


def power(a, b):
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return ONE
    return Bin("^", a, b)


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.vars = set(variables)
        self.toks = self._tokenize(text)
        self.i = 0

    @staticmethod
    def _tokenize(text):
        toks, pos = [], 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ExpressionError(f"unexpected character {text[pos:].strip()[:1]!r} at {pos} in {text!r}")
            num, name, op = m.groups()
            toks.append(("num", num) if num else ("name", name) if name else ("op", op))
            pos = m.end()
        return toks

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, val=None):
        tok = self.peek()
        if tok[0] is None or (val is not None and tok[1] != val):
            raise ExpressionError(f"expected {val or 'token'} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.i != len(self.toks):
            raise ExpressionError(f"trailing input {self.toks[self.i][1]!r} in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = Bin("+", node, rhs if op == "+" else Neg(rhs))
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

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
        if self.peek() in (("op", "^"), ("op", "**")):
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return Num(val)
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                if val not in _FUNCS:
                    raise ExpressionError(f"unknown function {val!r} in {self.text!r}")
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Fn(val, arg)
            if val in self.vars:
                return Var(val)
            if val in _CONSTS:
                return Num(_CONSTS[val])
            raise ExpressionError(f"unknown name {val!r} in {self.text!r}")
        if (kind, val) == ("op", "("):
            self.take()
            node = self.expr()
            self.take(")")
            return node
        raise ExpressionError(f"unexpected {val!r} in {self.text!r}")


class Expression:
    """Parsed scalar expression over named variables."""

    def __init__(self, text, variables, tree=None):
        self.text = text
        self.variables = tuple(variables)
        self.tree = tree if tree is not None else _Parser(text, variables).parse()

    def __call__(self, x):
        """Evaluate at points x of shape (N, len(variables))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        env = {v: x[:, i] for i, v in enumerate(self.variables)}
        with np.errstate(all="ignore"):
            out = self.tree.eval(env)
        return np.broadcast_to(np.asarray(out, dtype=float), (x.shape[0],)).copy()

    def diff(self, var):
        if var not in self.variables:
            raise ExpressionError(f"unknown variable {var!r}")
        return Expression(f"d/d{var}[{self.text}]", self.variables, self.tree.diff(var))

    @property
    def is_zero(self):
        return _is(self.tree, 0.0)

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse(text, variables):
    return Expression(str(text), variables)
