"""Small closed-form expression grammar for configuration fields.

Accepts sums, differences, products, quotients and powers of numbers,
the permitted variables, ``pi`` and the functions sin, cos, exp.  Parsed
through the ast module with a strict node whitelist; evaluation is
vectorized over numpy arrays.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

import numpy as np


class ExpressionError(ValueError):
    pass


_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTANTS = {"pi": math.pi}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
}
_UNARYOPS = {ast.UAdd: lambda a: +a, ast.USub: lambda a: -a}


def _validate(node: ast.AST, variables: tuple, allow_complex: bool, source: str):
    if isinstance(node, ast.Expression):
        _validate(node.body, variables, allow_complex, source)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator not allowed in {source!r}")
        _validate(node.left, variables, allow_complex, source)
        _validate(node.right, variables, allow_complex, source)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARYOPS:
            raise ExpressionError(f"unary operator not allowed in {source!r}")
        _validate(node.operand, variables, allow_complex, source)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, complex):
            if not allow_complex:
                raise ExpressionError(
                    f"complex constant in real-valued expression {source!r}")
        elif not isinstance(node.value, (int, float)):
            raise ExpressionError(f"literal {node.value!r} not allowed in {source!r}")
    elif isinstance(node, ast.Name):
        if node.id not in variables and node.id not in _CONSTANTS:
            raise ExpressionError(
                f"unknown name {node.id!r} in {source!r}; "
                f"allowed variables: {', '.join(variables) or 'none'}")
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError(f"only sin, cos, exp may be called in {source!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(
                f"{node.func.id} takes exactly one argument in {source!r}")
        _validate(node.args[0], variables, allow_complex, source)
    else:
        raise ExpressionError(
            f"construct {type(node).__name__} not allowed in {source!r}")


def _evaluate(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, env),
                                      _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARYOPS[type(node.op)](_evaluate(node.operand, env))
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTANTS[node.id]
    if isinstance(node, ast.Call):
        return _FUNCTIONS[node.func.id](_evaluate(node.args[0], env))
    raise AssertionError("validated tree contains unexpected node")


@dataclass(frozen=True)
class Expression:
    source: str
    variables: tuple
    allow_complex: bool

    def __call__(self, **values):
        missing = set(self.variables) - set(values)
        if missing:
            raise ExpressionError(f"missing variables {sorted(missing)} "
                                  f"for {self.source!r}")
        tree = ast.parse(self.source, mode="eval")
        result = _evaluate(tree, values)
        shapes = [np.shape(v) for v in values.values() if np.shape(v)]
        if shapes and not np.shape(result):
            result = np.full(shapes[0], result,
                             dtype=complex if self.allow_complex else float)
        return result


def parse_expression(source: str, variables: tuple = ("x",),
                     allow_complex: bool = False) -> Expression:
    source = source.strip()
    if not source:
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from exc
    _validate(tree, variables, allow_complex, source)
    return Expression(source, tuple(variables), allow_complex)
