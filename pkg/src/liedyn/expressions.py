"""Restricted symbolic expression grammar compiled to numeric callables.

The grammar accepts ``+ - * / ^`` (``**`` is the same as ``^``), the functions
``sin``, ``cos``, ``sqrt``, the constants ``pi`` and ``e``, numeric literals,
and a declared set of variable names.  Anything else is rejected before the
string reaches the parser, so configuration files cannot smuggle arbitrary
code into :mod:`sympy`.

Expressions are differentiated symbolically, which gives exact gradients for
user-supplied observables and exact time derivatives for user-supplied drive
functions.
"""

from __future__ import annotations

import re
from typing import Callable, Sequence

import sympy as sp

_ALLOWED_FUNCS = {"sin": sp.sin, "cos": sp.cos, "sqrt": sp.sqrt}
_ALLOWED_CONSTS = {"pi": sp.pi, "e": sp.E}
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_CHAR_RE = re.compile(r"^[A-Za-z_0-9+\-*/^().,\s.eE]+$")


class ExpressionError(ValueError):
    """Raised when an expression string falls outside the grammar."""


def parse(text: str, variables: Sequence[str]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over the declared variables."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    if not _CHAR_RE.match(text):
        raise ExpressionError(f"illegal characters in expression: {text!r}")
    allowed_names = set(variables) | set(_ALLOWED_FUNCS) | set(_ALLOWED_CONSTS)
    for name in _NAME_RE.findall(text):
        if name not in allowed_names:
            raise ExpressionError(
                f"unknown name {name!r} in expression (allowed: "
                f"{sorted(allowed_names)})"
            )
    local = {v: sp.Symbol(v, real=True) for v in variables}
    local.update(_ALLOWED_FUNCS)
    local.update(_ALLOWED_CONSTS)
    try:
        expr = sp.parse_expr(
            text.replace("^", "**"), local_dict=local, evaluate=True
        )
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc}") from exc
    return expr


def compile_scalar(text: str, variables: Sequence[str]) -> Callable[..., float]:
    """Compile an expression to a numpy-backed callable of the variables."""
    expr = parse(text, variables)
    syms = [sp.Symbol(v, real=True) for v in variables]
    return sp.lambdify(syms, expr, modules="numpy")


def compile_with_derivatives(
    text: str, variables: Sequence[str]
) -> tuple[Callable[..., float], tuple[Callable[..., float], ...]]:
    """Compile an expression plus its first derivative in each variable."""
    expr = parse(text, variables)
    syms = [sp.Symbol(v, real=True) for v in variables]
    func = sp.lambdify(syms, expr, modules="numpy")
    derivs = tuple(
        sp.lambdify(syms, sp.diff(expr, s), modules="numpy") for s in syms
    )
    return func, derivs
