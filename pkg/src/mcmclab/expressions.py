"""Tiny arithmetic-expression grammar for custom log-densities.

Supported: + - * / ^ (also ** ), unary minus, numeric literals, the variable
x, the constants pi and e, and the functions exp, log, abs. Parsed through
the Python ast with a strict node whitelist, then compiled once; evaluation
is numpy-vectorized.
"""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

from .errors import UsageError

_FUNCS = {"exp": np.exp, "log": np.log, "abs": np.abs}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _check(node: ast.AST, text: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, text)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand, text)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        pass
    elif isinstance(node, ast.Name):
        if node.id != "x" and node.id not in _CONSTS:
            raise UsageError(
                f"unknown name {node.id!r} in expression {text!r}; allowed names: x, pi, e"
            )
    elif isinstance(node, ast.Call):
        fname = node.func.id if isinstance(node.func, ast.Name) else "<expression>"
        if fname not in _FUNCS:
            raise UsageError(
                f"unsupported function {fname!r} in expression {text!r}; allowed: exp, log, abs"
            )
        if len(node.args) != 1 or node.keywords:
            raise UsageError(f"function {fname!r} takes exactly one argument in {text!r}")
        _check(node.args[0], text)
    else:
        raise UsageError(
            f"unsupported syntax ({type(node).__name__}) in expression {text!r}"
        )


def compile_expression(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression in x to a vectorized float function.

    Raises UsageError on malformed input, naming the offending token or
    position so CLI users can find it.
    """
    if not isinstance(text, str) or not text.strip():
        raise UsageError("empty density expression")
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as e:
        raise UsageError(
            f"malformed expression {text!r}: {e.msg} near position {e.offset}"
        ) from None
    _check(tree, text)
    code = compile(tree, "<density-expression>", "eval")
    env = {"__builtins__": {}}
    env.update(_FUNCS)
    env.update(_CONSTS)

    def fn(x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(all="ignore"):
            out = eval(code, env, {"x": x})  # noqa: S307 - whitelisted ast above
        out = np.asarray(out, dtype=np.float64)
        if out.shape != x.shape:
            out = np.broadcast_to(out, x.shape).copy()
        return out

    return fn
