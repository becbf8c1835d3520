"""Restricted arithmetic expressions in x and y.

Grammar: numbers, the identifiers ``x``, ``y`` and ``pi``, the functions
``sin``, ``cos`` and ``exp``, binary ``+ - * / **``, unary ``+ -`` and
parentheses. A top-level comma-separated pair denotes a vector field.
Parsing uses :mod:`ast` and rejects every other node type, so nothing is
ever executed.
"""

import ast
import math
import operator

import numpy as np
import sympy

VARIABLES = ("x", "y")
FUNCTIONS = ("sin", "cos", "exp")
CONSTANTS = ("pi",)

MAX_SYMBOLIC_EXPONENT = 64

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class ExpressionError(ValueError):
    """Invalid expression; ``col`` is the 1-based column of the offending token."""

    def __init__(self, message, text, col=None):
        self.text, self.col = text, col
        where = f" at column {col}" if col else ""
        super().__init__(f"{message}{where} in {text!r}")


def _check(node, text):
    col = getattr(node, "col_offset", None)
    col = col + 1 if col is not None else None
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}", text, col)
    elif isinstance(node, ast.Name):
        if node.id not in VARIABLES + CONSTANTS:
            raise ExpressionError(f"unknown identifier {node.id!r}", text, col)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}", text, col)
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}", text, col)
        _check(node.operand, text)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            name = getattr(node.func, "id", "?")
            raise ExpressionError(f"unknown function {name!r}", text, col)
        if node.keywords or len(node.args) != 1:
            raise ExpressionError(f"{node.func.id} takes exactly one argument", text, col)
        _check(node.args[0], text)
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}", text, col)


class Expression:
    """A parsed scalar or two-component expression."""

    def __init__(self, text):
        self.text = text.strip()
        if not self.text:
            raise ExpressionError("empty expression", text)
        try:
            tree = ast.parse(self.text, mode="eval").body
        except SyntaxError as exc:
            raise ExpressionError(f"syntax error: {exc.msg}", text, exc.offset) from None
        parts = tree.elts if isinstance(tree, ast.Tuple) else [tree]
        if isinstance(tree, ast.Tuple) and len(parts) != 2:
            raise ExpressionError(f"vector fields need 2 components, got {len(parts)}", text)
        for p in parts:
            _check(p, self.text)
        self._parts = parts

    @property
    def arity(self):
        return len(self._parts)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return env["literal"](node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            a, b = self._eval(node.left, env), self._eval(node.right, env)
            if isinstance(node.op, ast.Pow):
                return env["pow"](a, b)
            return _BINOPS[type(node.op)](a, b)
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        return env[node.func.id](self._eval(node.args[0], env))

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        env = {"x": x, "y": y, "pi": math.pi, "sin": np.sin, "cos": np.cos, "exp": np.exp,
               "literal": float, "pow": np.power}
        with np.errstate(all="raise"):
            try:
                vals = [np.broadcast_to(np.asarray(self._eval(p, env), dtype=float),
                                        np.broadcast(x, y).shape) for p in self._parts]
            except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
                raise ExpressionError(f"evaluation failed ({exc})", self.text) from None
        return vals[0] if self.arity == 1 else tuple(vals)

    def symbolic(self, x, y):
        """sympy expression (or pair) in the given symbols."""
        def power(a, b):
            if b.is_number and abs(float(b)) > MAX_SYMBOLIC_EXPONENT:
                raise ExpressionError(f"exponent {b} too large", self.text)
            return a ** b

        env = {"x": x, "y": y, "pi": sympy.pi, "sin": sympy.sin, "cos": sympy.cos,
               "exp": sympy.exp, "literal": lambda v: sympy.nsimplify(v, rational=True),
               "pow": power}
        out = [sympy.sympify(self._eval(p, env)) for p in self._parts]
        return out[0] if self.arity == 1 else tuple(out)

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse(text, arity=None):
    """Parse ``text``; raise :class:`ExpressionError` unless it has ``arity`` components."""
    e = Expression(text)
    if arity is not None and e.arity != arity:
        kind = "scalar" if arity == 1 else f"{arity}-component vector"
        raise ExpressionError(f"expected a {kind} expression", text)
    return e
