"""Tiny arithmetic expression language for level sets and boundary data.

Grammar: numbers, the variables ``x``, ``y`` (and ``t`` where allowed), the
constant ``pi``, binary ``+ - * / ^`` (``**`` also accepted), unary minus,
parentheses and the functions ``sin cos tanh exp``. Anything else is
rejected before the text reaches sympy.
"""
from __future__ import annotations

import ast

import numpy as np
import sympy

FUNCTIONS = {"sin": sympy.sin, "cos": sympy.cos, "tanh": sympy.tanh, "exp": sympy.exp}
CONSTANTS = {"pi": sympy.pi}
_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
                  ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


class ExpressionError(ValueError):
    pass


def parse(text, variables=("x", "y")):
    """Validate ``text`` and return the sympy expression."""
    src = str(text).strip().replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(f"unsupported syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Constant) and (isinstance(node.value, bool)
                                               or not isinstance(node.value, (int, float))):
            raise ExpressionError(f"only numeric constants are allowed in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or len(node.args) != 1 \
                    or node.keywords:
                raise ExpressionError(f"unsupported function call in {text!r}")
        if isinstance(node, ast.Name) and node.id not in FUNCTIONS and node.id not in CONSTANTS \
                and node.id not in variables:
            raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
    symbols = {v: sympy.Symbol(v) for v in variables}
    namespace = {**FUNCTIONS, **CONSTANTS, **symbols}
    result = sympy.sympify(src, locals=namespace)
    if result.has(sympy.zoo, sympy.oo, -sympy.oo, sympy.nan):
        raise ExpressionError(f"expression {text!r} is not finite")
    return result


def lambdify(expr, variables=("x", "y")):
    """Vectorised numpy callable for a sympy expression; constants broadcast."""
    syms = [sympy.Symbol(v) for v in variables]
    f = sympy.lambdify(syms, expr, modules="numpy")

    def call(*args):
        out = np.asarray(f(*args), dtype=float)
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out

    return call


def compile_expression(text, variables=("x", "y")):
    return lambdify(parse(text, variables), variables)
