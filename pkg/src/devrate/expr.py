"""Arithmetic expression language for user-defined potentials and observables.

Expressions use the state coordinates as variables, the operators
``+ - * / ^`` and the functions ``exp, log, sqrt, sin, cos, tanh, cosh, sinh, atan``.
They are parsed with sympy, differentiated symbolically and compiled to numpy.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from .errors import ExpressionError
from .model import ScalarField

_FUNCTIONS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "tanh": sp.tanh,
    "cosh": sp.cosh,
    "sinh": sp.sinh,
    "atan": sp.atan,
    "pi": sp.pi,
}

_TRANSFORMS = standard_transformations + (convert_xor,)


def default_variables(dim: int) -> list[str]:
    """Coordinate names: ``x`` in 1-d, ``x, y`` in 2-d, ``x0..x{d-1}`` otherwise."""
    if dim == 1:
        return ["x"]
    if dim == 2:
        return ["x", "y"]
    return [f"x{i}" for i in range(dim)]


def parse_expression(text: str, variables: Sequence[str]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over ``variables``.

    Raises
    ------
    ExpressionError
        On syntax errors or names that are neither variables nor known functions.
    """
    symbols = {v: sp.Symbol(v, real=True) for v in variables}
    local = dict(_FUNCTIONS)
    local.update(symbols)
    try:
        expr = parse_expr(str(text), local_dict=local, transformations=_TRANSFORMS, evaluate=True)
    except Exception as exc:  # sympy raises a variety of exception types
        raise ExpressionError(f"cannot parse expression {text!r}: {exc}") from None
    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"expression {text!r} is not a scalar expression")
    unknown = {s.name for s in expr.free_symbols} - set(variables)
    if unknown:
        raise ExpressionError(f"unknown names in {text!r}: {sorted(unknown)}; variables are {list(variables)}")
    undefined = [f for f in expr.atoms(sp.Function) if isinstance(f, sp.core.function.AppliedUndef)]
    if undefined:
        raise ExpressionError(f"unknown functions in {text!r}: {sorted(str(f.func) for f in undefined)}")
    return expr


def _compile(expr: sp.Expr, symbols):
    f = sp.lambdify(symbols, expr, modules="numpy")

    def call(X):
        out = f(*[X[:, i] for i in range(X.shape[1])])
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],))

    return call


def field_from_expression(text: str, dim: int, variables: Sequence[str] | None = None,
                          name: str | None = None) -> ScalarField:
    """Build a :class:`ScalarField` with exact symbolic derivatives.

    Examples
    --------
    >>> V = field_from_expression("x^4/4", 1)
    >>> float(V.gradient(2.0)[0])
    8.0
    """
    variables = list(variables or default_variables(dim))
    if len(variables) != dim:
        raise ExpressionError(f"expected {dim} variable names, got {variables}")
    expr = parse_expression(text, variables)
    syms = [sp.Symbol(v, real=True) for v in variables]
    grads = [sp.diff(expr, s) for s in syms]
    value = _compile(expr, syms)
    grad_fns = [_compile(g, syms) for g in grads]
    hess_fns = [[_compile(sp.diff(g, s), syms) for s in syms] for g in grads]

    def grad(X):
        return np.stack([g(X) for g in grad_fns], axis=1)

    def hess(X):
        return np.stack([np.stack([h(X) for h in row], axis=1) for row in hess_fns], axis=1)

    return ScalarField(dim, value, grad, hess, name=name or str(text))
