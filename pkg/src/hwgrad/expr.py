"""Symbolic differentiable expressions over named parameters.

Every hardware metric is an expression tree over `Const`, `Param` and the
operators add/sub/mul/div/max/min/ceil/exp.  Trees are immutable, evaluate
with plain 64-bit floats, and differentiate symbolically.  Two deliberate
relaxations keep every metric differentiable:

* ``Ceil`` differentiates as identity (straight-through).
* ``Max``/``Min`` differentiate to the derivative of the branch that is
  active at evaluation time (ties go to the first operand), encoded with a
  guarded ``Branch`` node so the choice is deferred until evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParseError, UnboundParameter

__all__ = [
    "rename_params",
    "Expr", "Const", "Param", "Add", "Sub", "Mul", "Div",
    "Max", "Min", "Ceil", "Exp", "Branch",
    "esum", "finite_diff", "parse", "to_text",
]


@dataclass(frozen=True)
class Expr:
    """Base node.  Subclasses define children; all nodes are immutable."""

    def eval(self, env: dict) -> float:
        raise NotImplementedError

    def diff(self, name: str) -> "Expr":
        raise NotImplementedError

    def subs(self, env: dict) -> "Expr":
        raise NotImplementedError

    def params(self) -> set:
        out = set()
        self._collect(out)
        return out

    def _collect(self, out: set) -> None:
        raise NotImplementedError

    # Arithmetic sugar; plain numbers are promoted to Const.
    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)

    def __truediv__(self, other):
        return Div(self, _wrap(other))

    def __rtruediv__(self, other):
        return Div(_wrap(other), self)


def _wrap(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return Const(float(v))


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def eval(self, env):
        return self.value

    def diff(self, name):
        return _ZERO

    def subs(self, env):
        return self

    def _collect(self, out):
        pass


@dataclass(frozen=True)
class Param(Expr):
    name: str

    def eval(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise UnboundParameter(self.name) from None

    def diff(self, name):
        return _ONE if self.name == name else _ZERO

    def subs(self, env):
        if self.name in env:
            return Const(float(env[self.name]))
        return self

    def _collect(self, out):
        out.add(self.name)


@dataclass(frozen=True)
class _Binary(Expr):
    left: Expr
    right: Expr

    def _collect(self, out):
        self.left._collect(out)
        self.right._collect(out)

    def subs(self, env):
        l, r = self.left.subs(env), self.right.subs(env)
        node = type(self)(l, r)
        if isinstance(l, Const) and isinstance(r, Const):
            return Const(node.eval({}))
        return node


@dataclass(frozen=True)
class _Unary(Expr):
    arg: Expr

    def _collect(self, out):
        self.arg._collect(out)

    def subs(self, env):
        a = self.arg.subs(env)
        node = type(self)(a)
        if isinstance(a, Const):
            return Const(node.eval({}))
        return node


class Add(_Binary):
    def eval(self, env):
        return self.left.eval(env) + self.right.eval(env)

    def diff(self, name):
        return _add(self.left.diff(name), self.right.diff(name))


class Sub(_Binary):
    def eval(self, env):
        return self.left.eval(env) - self.right.eval(env)

    def diff(self, name):
        return _sub(self.left.diff(name), self.right.diff(name))


class Mul(_Binary):
    def eval(self, env):
        return self.left.eval(env) * self.right.eval(env)

    def diff(self, name):
        return _add(_mul(self.left.diff(name), self.right),
                    _mul(self.left, self.right.diff(name)))


class Div(_Binary):
    def eval(self, env):
        return self.left.eval(env) / self.right.eval(env)

    def diff(self, name):
        df, dg = self.left.diff(name), self.right.diff(name)
        if _is_zero(dg):
            return _div(df, self.right)
        num = _sub(_mul(df, self.right), _mul(self.left, dg))
        return _div(num, Mul(self.right, self.right))


class Max(_Binary):
    def eval(self, env):
        return max(self.left.eval(env), self.right.eval(env))

    def diff(self, name):
        return _branch(self.left, self.right,
                       self.left.diff(name), self.right.diff(name), "max")


class Min(_Binary):
    def eval(self, env):
        return min(self.left.eval(env), self.right.eval(env))

    def diff(self, name):
        return _branch(self.left, self.right,
                       self.left.diff(name), self.right.diff(name), "min")


class Ceil(_Unary):
    def eval(self, env):
        return float(math.ceil(self.arg.eval(env)))

    # Straight-through: tiling counts like ceil(N/B) are treated as the
    # smooth N/B for gradient purposes.
    def diff(self, name):
        return self.arg.diff(name)


class Exp(_Unary):
    def eval(self, env):
        return math.exp(self.arg.eval(env))

    def diff(self, name):
        da = self.arg.diff(name)
        if _is_zero(da):
            return _ZERO
        return _mul(self, da)


@dataclass(frozen=True)
class Branch(Expr):
    """Guarded derivative of Max/Min: evaluate `left` vs `right`, then take
    `dleft` or `dright` for whichever branch is active.  Ties pick the first
    operand, so only the critical path carries gradient."""

    left: Expr
    right: Expr
    dleft: Expr
    dright: Expr
    kind: str  # "max" or "min"

    def eval(self, env):
        a, b = self.left.eval(env), self.right.eval(env)
        if self.kind == "max":
            take_left = a >= b
        else:
            take_left = a <= b
        return self.dleft.eval(env) if take_left else self.dright.eval(env)

    def diff(self, name):
        return _branch(self.left, self.right,
                       self.dleft.diff(name), self.dright.diff(name), self.kind)

    def subs(self, env):
        node = Branch(self.left.subs(env), self.right.subs(env),
                      self.dleft.subs(env), self.dright.subs(env), self.kind)
        if all(isinstance(c, Const) for c in
               (node.left, node.right, node.dleft, node.dright)):
            return Const(node.eval({}))
        return node

    def _collect(self, out):
        for c in (self.left, self.right, self.dleft, self.dright):
            c._collect(out)


_ZERO = Const(0.0)
_ONE = Const(1.0)


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def _is_one(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 1.0


# Folding constructors used by diff so that derivatives of absent
# parameters collapse to Const(0) structurally.

def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Sub(a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return _ZERO
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def _div(a, b):
    if _is_zero(a):
        return _ZERO
    if _is_one(b):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    return Div(a, b)


def _branch(l, r, dl, dr, kind):
    if dl == dr:
        return dl
    return Branch(l, r, dl, dr, kind)


def replace_params(e: Expr, mapping: dict) -> Expr:
    """Rebuild `e` with Param nodes swapped for the expressions in
    `mapping` (name -> Expr); unmapped parameters stay symbolic."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Param):
        return mapping.get(e.name, e)
    if isinstance(e, _Binary):
        return type(e)(replace_params(e.left, mapping), replace_params(e.right, mapping))
    if isinstance(e, _Unary):
        return type(e)(replace_params(e.arg, mapping))
    if isinstance(e, Branch):
        return Branch(replace_params(e.left, mapping), replace_params(e.right, mapping),
                      replace_params(e.dleft, mapping), replace_params(e.dright, mapping),
                      e.kind)
    raise TypeError(f"unknown node {type(e).__name__}")


def rename_params(e: Expr, mapping: dict) -> Expr:
    """Rebuild `e` with parameter names substituted per `mapping`."""
    return replace_params(e, {old: Param(new) for old, new in mapping.items()})


def esum(terms) -> Expr:
    """Balanced-tree sum; keeps recursion depth logarithmic for long
    accumulations (e.g. per-vertex time over 1000-vertex workloads)."""
    terms = list(terms)
    if not terms:
        return _ZERO
    while len(terms) > 1:
        nxt = []
        for i in range(0, len(terms) - 1, 2):
            nxt.append(Add(terms[i], terms[i + 1]))
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def finite_diff(e: Expr, name: str, env: dict, h: float = 1e-5) -> float:
    """Central finite difference of eval(e, .) along one parameter."""
    hi = dict(env)
    lo = dict(env)
    hi[name] = env[name] + h
    lo[name] = env[name] - h
    return (e.eval(hi) - e.eval(lo)) / (2.0 * h)


# ---------------------------------------------------------------------------
# Textual form: prefix notation, e.g. (add (mul 2 wireCap) node).
# Grammar:
#   expr   := NUMBER | IDENT | '(' op expr... ')'
#   op     := add|sub|mul|div|max|min|ceil|exp|dmax|dmin
# dmax/dmin take four operands (guard pair then derivative pair) and read
# back as Branch nodes.
# ---------------------------------------------------------------------------

_BINOPS = {"add": Add, "sub": Sub, "mul": Mul, "div": Div, "max": Max, "min": Min}
_UNOPS = {"ceil": Ceil, "exp": Exp}


def to_text(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Param):
        return e.name
    if isinstance(e, _Binary):
        op = type(e).__name__.lower()
        return f"({op} {to_text(e.left)} {to_text(e.right)})"
    if isinstance(e, _Unary):
        op = type(e).__name__.lower()
        return f"({op} {to_text(e.arg)})"
    if isinstance(e, Branch):
        op = "dmax" if e.kind == "max" else "dmin"
        parts = " ".join(to_text(c) for c in (e.left, e.right, e.dleft, e.dright))
        return f"({op} {parts})"
    raise TypeError(f"unknown node {type(e).__name__}")


def _tokenize(text):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse(text: str, source: str = "<expr>") -> Expr:
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError(source, 1, "empty expression")
    expr, rest = _parse_tokens(tokens, source)
    if rest:
        raise ParseError(source, 1, f"trailing tokens: {' '.join(rest[:4])}")
    return expr


def _parse_tokens(tokens, source):
    tok, rest = tokens[0], tokens[1:]
    if tok == "(":
        if not rest:
            raise ParseError(source, 1, "unterminated '('")
        op, rest = rest[0], rest[1:]
        args = []
        while rest and rest[0] != ")":
            arg, rest = _parse_tokens(rest, source)
            args.append(arg)
        if not rest:
            raise ParseError(source, 1, "unterminated '('")
        rest = rest[1:]  # drop ')'
        return _build(op, args, source), rest
    if tok == ")":
        raise ParseError(source, 1, "unexpected ')'")
    try:
        return Const(float(tok)), rest
    except ValueError:
        pass
    if not tok.replace("_", "").replace(".", "").isalnum():
        raise ParseError(source, 1, f"bad token '{tok}'")
    return Param(tok), rest


def _build(op, args, source):
    if op in _BINOPS:
        if len(args) != 2:
            raise ParseError(source, 1, f"'{op}' takes 2 operands, got {len(args)}")
        return _BINOPS[op](*args)
    if op in _UNOPS:
        if len(args) != 1:
            raise ParseError(source, 1, f"'{op}' takes 1 operand, got {len(args)}")
        return _UNOPS[op](*args)
    if op in ("dmax", "dmin"):
        if len(args) != 4:
            raise ParseError(source, 1, f"'{op}' takes 4 operands, got {len(args)}")
        return Branch(args[0], args[1], args[2], args[3], op[1:])
    raise ParseError(source, 1, f"unknown operator '{op}'")
