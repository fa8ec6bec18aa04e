"""A small arithmetic expression language for problem data.

Grammar (Python precedence, ``^`` is exponentiation)::

    expr   := expr ('+' | '-') term | term
    term   := term ('*' | '/') factor | factor
    factor := ('+' | '-') factor | power
    power  := atom '^' factor | atom
    atom   := number | name | name '(' expr {',' expr} ')' | '(' expr ')'

Names are the coordinates ``x``, ``y``, ``t`` and the constants ``pi``,
``alpha`` and ``T``. Functions are ``sin``, ``cos``, ``exp``, ``pow``,
``sqrt`` and ``gamma``. Expressions are parsed with :mod:`ast` and evaluated
by walking a whitelisted tree; nothing is passed to ``eval``.
"""

from __future__ import annotations

import ast
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma

from fracreg.errors import SpecError

FUNCTIONS = {
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "exp": (np.exp, 1),
    "sqrt": (np.sqrt, 1),
    "gamma": (_gamma, 1),
    "pow": (np.power, 2),
}
COORDINATES = ("x", "y", "t")
CONSTANTS = ("pi", "alpha", "T")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _check(node: ast.AST, source: str) -> set[str]:
    """Validate the tree; return the coordinate names it uses."""
    used: set[str] = set()
    for n in ast.walk(node):
        if isinstance(n, (ast.Expression, ast.Load)) or type(n) in _BINOPS:
            continue
        if isinstance(n, (ast.BinOp, ast.USub, ast.UAdd)):
            if isinstance(n, ast.BinOp) and type(n.op) not in _BINOPS:
                raise SpecError(f"operator not allowed in {source!r}")
            continue
        if isinstance(n, ast.UnaryOp):
            if not isinstance(n.op, (ast.USub, ast.UAdd)):
                raise SpecError(f"operator not allowed in {source!r}")
            continue
        if isinstance(n, ast.Constant):
            if isinstance(n.value, bool) or not isinstance(n.value, (int, float)):
                raise SpecError(f"literal {n.value!r} not allowed in {source!r}")
            continue
        if isinstance(n, ast.Call):
            if not isinstance(n.func, ast.Name) or n.func.id not in FUNCTIONS:
                raise SpecError(f"unknown function in {source!r}")
            if n.keywords:
                raise SpecError(f"keyword arguments not allowed in {source!r}")
            nargs = FUNCTIONS[n.func.id][1]
            if len(n.args) != nargs:
                raise SpecError(f"{n.func.id} takes {nargs} argument(s) in {source!r}")
            continue
        if isinstance(n, ast.Name):
            if n.id in FUNCTIONS:
                continue
            if n.id in COORDINATES:
                used.add(n.id)
                continue
            if n.id in CONSTANTS:
                continue
            raise SpecError(f"unknown name {n.id!r} in {source!r}")
        raise SpecError(f"syntax element {type(n).__name__} not allowed in {source!r}")
    return used


@dataclass(frozen=True)
class Expression:
    """A parsed expression with bound constants ``alpha`` and ``T``."""

    source: str
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        text = self.source.strip()
        if not text:
            raise SpecError("empty expression")
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise SpecError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        used = _check(tree, self.source)
        consts = {"pi": math.pi, **{k: float(v) for k, v in self.constants.items()}}
        object.__setattr__(self, "_tree", tree.body)
        object.__setattr__(self, "_used", frozenset(used))
        object.__setattr__(self, "_consts", consts)

    @property
    def variables(self) -> frozenset[str]:
        return self._used

    def __call__(self, **coords):
        missing = self._used - coords.keys()
        if missing:
            raise SpecError(f"expression {self.source!r} needs {sorted(missing)}")
        with np.errstate(all="ignore"):
            return self._eval(self._tree, coords)

    def _eval(self, n: ast.AST, env):
        if isinstance(n, ast.Constant):
            return float(n.value)
        if isinstance(n, ast.Name):
            if n.id in env:
                return np.asarray(env[n.id], dtype=np.float64)
            if n.id not in self._consts:
                raise SpecError(f"constant {n.id!r} is not bound in {self.source!r}")
            return self._consts[n.id]
        if isinstance(n, ast.UnaryOp):
            v = self._eval(n.operand, env)
            return -v if isinstance(n.op, ast.USub) else v
        if isinstance(n, ast.BinOp):
            return _BINOPS[type(n.op)](self._eval(n.left, env), self._eval(n.right, env))
        if isinstance(n, ast.Call):
            fn = FUNCTIONS[n.func.id][0]
            return fn(*(self._eval(a, env) for a in n.args))
        raise SpecError(f"cannot evaluate {self.source!r}")  # pragma: no cover


def spatial_function(expr: Expression, dim: int):
    """Callable ``u(x)`` or ``u(x, y)``; ``t`` is not allowed."""
    if "t" in expr.variables:
        raise SpecError(f"initial data may not depend on t: {expr.source!r}")
    if dim == 1:
        if "y" in expr.variables:
            raise SpecError(f"interval data may not use y: {expr.source!r}")
        return lambda x: expr(x=x)
    return lambda x, y: expr(x=x, y=y)


def space_time_function(expr: Expression, dim: int):
    """Callable ``f(x, t)`` or ``f(x, y, t)``."""
    if dim == 1:
        if "y" in expr.variables:
            raise SpecError(f"interval data may not use y: {expr.source!r}")
        return lambda x, t: expr(x=x, t=t)
    return lambda x, y, t: expr(x=x, y=y, t=t)
