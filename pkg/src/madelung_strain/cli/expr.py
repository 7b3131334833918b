"""Closed-form field expressions over grid coordinates.

Only numbers, coordinate names, named parameters, + - * / ** and the
functions exp, sin, cos, sqrt are accepted.  Anything else is a parse error
that names the column where it occurs.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}
CONSTANTS = {"pi": np.pi}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ValueError):
    def __init__(self, text: str, message: str, col: int | None = None):
        where = f" at column {col + 1}" if col is not None else ""
        super().__init__(f"{message}{where} in expression {text!r}")
        self.text = text
        self.col = col


@dataclass(frozen=True)
class Expression:
    text: str
    tree: ast.AST
    names: frozenset

    def __call__(self, env: dict) -> np.ndarray:
        return _eval(self.tree, env, self.text)


def parse_expression(text: str, allowed: set[str] | frozenset) -> Expression:
    """Parse and validate ``text``; ``allowed`` holds the variable names in scope."""
    text = str(text).strip()
    if not text:
        raise ExpressionError(text, "empty expression")
    try:
        tree = ast.parse(text, mode="eval").body
    except SyntaxError as exc:
        # an offset of 0 means the input ended early
        col = (exc.offset - 1) if exc.offset else len(text)
        raise ExpressionError(text, f"syntax error: {exc.msg}", col) from None
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name):
            if node.id not in allowed and node.id not in CONSTANTS and node.id not in FUNCTIONS:
                raise ExpressionError(text, f"unknown name {node.id!r}", node.col_offset)
            names.add(node.id)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionError(text, "only exp, sin, cos and sqrt may be called", node.col_offset)
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(text, f"{node.func.id} takes exactly one argument", node.col_offset)
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(text, f"operator {type(node.op).__name__} is not supported", node.col_offset)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise ExpressionError(text, "only unary + and - are supported", node.col_offset)
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(text, f"literal {node.value!r} is not a number", node.col_offset)
        elif isinstance(node, (ast.operator, ast.unaryop, ast.Load)):
            pass
        else:
            col = getattr(node, "col_offset", None)
            raise ExpressionError(text, f"unsupported syntax {type(node).__name__}", col)
    for name in names:
        if name in FUNCTIONS and not _is_called(tree, name):
            raise ExpressionError(text, f"function {name!r} used as a value")
    return Expression(text, tree, frozenset(names))


def _is_called(tree: ast.AST, name: str) -> bool:
    called = {id(n.func) for n in ast.walk(tree) if isinstance(n, ast.Call)}
    return all(id(n) in called for n in ast.walk(tree) if isinstance(n, ast.Name) and n.id == name)


def _eval(node: ast.AST, env: dict, text: str):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        return CONSTANTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env, text), _eval(node.right, env, text))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env, text)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](_eval(node.args[0], env, text))
    raise ExpressionError(text, f"cannot evaluate {type(node).__name__}")
