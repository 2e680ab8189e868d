"""Tiny arithmetic expression compiler used by config files.

Laws and intensities in TOML configs are written as strings such as
``"min(0.05*k + 0.005, 1)"`` or ``"1/6"``.  Only arithmetic, a handful of
numpy functions and the declared variable names are accepted.
"""

from __future__ import annotations

import ast
from typing import Callable

import numpy as np

_FUNCS = {
    "log": np.log,
    "ln": np.log,
    "log10": np.log10,
    "log2": np.log2,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "floor": np.floor,
    "ceil": np.ceil,
    "min": np.minimum,
    "max": np.maximum,
    "minimum": np.minimum,
    "maximum": np.maximum,
}
_CONSTS = {"pi": np.pi, "e": np.e, "inf": np.inf}

_ALLOWED = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


class ExpressionError(ValueError):
    pass


def compile_expr(text: str, variables: tuple[str, ...] = ()) -> Callable[..., np.ndarray]:
    """Compile ``text`` into a vectorised function of ``variables``."""
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ExpressionError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"unknown function in {text!r}")
            if node.keywords:
                raise ExpressionError(f"keyword arguments not allowed in {text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in _FUNCS and node.id not in _CONSTS and node.id not in variables:
                raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"non-numeric constant in {text!r}")
    code = compile(tree, "<expr>", "eval")
    namespace = {"__builtins__": {}, **_FUNCS, **_CONSTS}

    def fn(*args):
        if len(args) != len(variables):
            raise TypeError(f"expected {len(variables)} arguments, got {len(args)}")
        local = {name: np.asarray(val, dtype=float) for name, val in zip(variables, args)}
        return np.asarray(eval(code, namespace, local), dtype=float)

    fn.source = str(text)
    return fn


def number(value) -> float:
    """Read a config number that may be written as an expression string."""
    if isinstance(value, (int, float)):
        return float(value)
    return float(compile_expr(value)())
