"""Compile small arithmetic expressions over (x, y) into vectorised callables.

Used for conformal factors and perturbation directions given in configuration
files, e.g. ``"1 + 0.3*x"`` or ``"exp(-(x**2 + y**2))"``. Only a fixed grammar is
accepted: numbers, the names ``x``, ``y`` and ``pi``, the operators ``+ - * /``,
integer powers, unary minus and the function ``exp``.
"""
import ast
import math

import numpy as np

from ..errors import ConfigError


_BINARY = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}
_FUNCTIONS = {"exp": np.exp}
_NAMES = {"pi": math.pi}


class Expression:
    """A parsed expression; call it with coordinate arrays to evaluate"""

    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as error:
            raise ConfigError(f"Cannot parse expression {source!r}: {error.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name) and (node.id in ("x", "y") or node.id in _NAMES):
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return self._check(node.operand)
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exponent = node.right
                if isinstance(exponent, ast.UnaryOp) and isinstance(exponent.op, ast.USub):
                    exponent = exponent.operand
                if not (isinstance(exponent, ast.Constant) and isinstance(exponent.value, int)):
                    raise ConfigError(f"Only integer powers are allowed in {self.source!r}")
                return self._check(node.left)
            if type(node.op) in _BINARY:
                self._check(node.left)
                return self._check(node.right)
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCTIONS
            and len(node.args) == 1
            and not node.keywords
        ):
            return self._check(node.args[0])
        raise ConfigError(f"Unsupported construct {ast.dump(node)!r} in {self.source!r}")

    def _eval(self, node, x, y):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return {"x": x, "y": y}.get(node.id, _NAMES.get(node.id))
        if isinstance(node, ast.UnaryOp):
            value = self._eval(node.operand, x, y)
            return -value if isinstance(node.op, ast.USub) else value
        if isinstance(node, ast.BinOp):
            left = self._eval(node.left, x, y)
            if isinstance(node.op, ast.Pow):
                return np.power(np.asarray(left, dtype=float), self._eval(node.right, x, y))
            return _BINARY[type(node.op)](left, self._eval(node.right, x, y))
        return _FUNCTIONS[node.func.id](self._eval(node.args[0], x, y))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self._eval(self._tree, x, y), np.broadcast(x, y).shape).astype(float)

    def __repr__(self):
        return f"Expression({self.source!r})"
