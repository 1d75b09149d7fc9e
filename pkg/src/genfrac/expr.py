"""Small arithmetic expression language used in JSON configs.

Expressions use the operators ``+ - * / ^`` (``^`` is power), parentheses,
numeric literals, the constants ``pi`` and ``e``, and the functions ``exp``,
``cos``, ``sin``, ``pow``, ``gamma``, ``sqrt``, ``log`` and ``abs``.  The set of
variable names is fixed by the caller, e.g. ``("t", "tau", "s", "alpha")`` for
kernels or ``("t", "y", "u", "v", "w")`` for Lagrangians.

Parsing goes through :mod:`ast` with a whitelist of node types, so nothing but
arithmetic can be evaluated.
"""

from __future__ import annotations

import ast
import math
from collections.abc import Callable, Sequence

import numpy as np

from genfrac import specfun
from genfrac.errors import ExpressionError

_gamma_vec = np.vectorize(specfun.gamma, otypes=[float])

FUNCTIONS: dict[str, Callable[..., object]] = {
    "exp": np.exp,
    "cos": np.cos,
    "sin": np.sin,
    "pow": np.power,
    "gamma": _gamma_vec,
    "sqrt": np.sqrt,
    "log": np.log,
    "abs": np.abs,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_ALLOWED_NODES = (
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


class Expression:
    """A compiled expression, callable with keyword arguments or positionally.

    >>> f = Expression("2*(u + v)", ("t", "y", "u", "v", "w"))
    >>> f(0.0, 0.0, 1.0, 2.0, 0.0)
    6.0
    """

    def __init__(self, source: str, variables: Sequence[str]) -> None:
        if not isinstance(source, str) or not source.strip():
            raise ExpressionError("expression must be a non-empty string")
        self.source = source
        self.variables = tuple(variables)
        clash = set(self.variables) & (set(FUNCTIONS) | set(CONSTANTS))
        if clash:
            raise ExpressionError(f"variable names shadow builtins: {sorted(clash)}")

        try:
            tree = ast.parse(source.replace("^", "**").strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._validate(tree)
        self._code = compile(tree, "<expression>", "eval")

    def _validate(self, tree: ast.AST) -> None:
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise ExpressionError(
                    f"unsupported syntax {type(node).__name__} in {self.source!r}"
                )
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ExpressionError(f"only numeric literals allowed in {self.source!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                    raise ExpressionError(
                        f"unknown function in {self.source!r}; "
                        f"valid functions: {sorted(FUNCTIONS)}"
                    )
                if node.keywords:
                    raise ExpressionError("keyword arguments are not supported")
            elif isinstance(node, ast.Name):
                if node.id not in FUNCTIONS and node.id not in CONSTANTS and node.id not in self.variables:
                    raise ExpressionError(
                        f"unknown name {node.id!r} in {self.source!r}; "
                        f"valid variables: {list(self.variables)}"
                    )

    def __call__(self, *args, **kwargs):
        if args:
            if len(args) != len(self.variables):
                raise ExpressionError(
                    f"expected {len(self.variables)} arguments, got {len(args)}"
                )
            kwargs = dict(zip(self.variables, args), **kwargs)
        namespace: dict[str, object] = {"__builtins__": {}}
        namespace.update(FUNCTIONS)
        namespace.update(CONSTANTS)
        namespace.update(kwargs)
        with np.errstate(all="ignore"):
            value = eval(self._code, namespace)  # noqa: S307 - validated AST
        # constants must still broadcast against array arguments
        shape = np.broadcast_shapes(*(np.shape(v) for v in kwargs.values())) if kwargs else ()
        if np.shape(value) != shape:
            value = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        if np.ndim(value) == 0:
            return float(value)
        return np.asarray(value, dtype=float)

    def __repr__(self) -> str:
        return f"Expression({self.source!r}, {self.variables!r})"
