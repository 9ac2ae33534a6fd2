"""Expression-level utilities: constant evaluation, folding, polynomials."""
from __future__ import annotations

from dataclasses import replace

from . import ast
from .ast import Binary, BuiltinCall, FloatLit, IntLit, ParamRef, Subscript, Unary, VarRef


class UnboundExpr(Exception):
    """eval_const_expr hit a name with no binding."""

    def __init__(self, name):
        self.name = name
        super().__init__(f"no binding for {name!r}")


def _c_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in constant expression")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _c_rem(a: int, b: int) -> int:
    return a - _c_div(a, b) * b


def eval_const_expr(e, env: dict = None):
    """Evaluate an expression over int/float bindings with C semantics
    (truncating integer division). Raises UnboundExpr for free names and
    TypeError for constructs with no constant meaning (loads, builtins).
    """
    env = env or {}
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, FloatLit):
        return e.value
    if isinstance(e, (VarRef, ParamRef)):
        if e.name in env:
            return env[e.name]
        raise UnboundExpr(e.name)
    if isinstance(e, Unary):
        v = eval_const_expr(e.operand, env)
        if e.op == "-":
            return -v
        if e.op == "+":
            return v
        if e.op == "!":
            return 0 if v else 1
        raise TypeError(f"cannot evaluate unary {e.op!r}")
    if isinstance(e, Binary):
        a = eval_const_expr(e.left, env)
        b = eval_const_expr(e.right, env)
        both_int = isinstance(a, int) and isinstance(b, int)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return _c_div(a, b) if both_int else a / b
        if e.op == "%":
            if not both_int:
                raise TypeError("% requires integers")
            return _c_rem(a, b)
        if e.op == "<":
            return int(a < b)
        if e.op == "<=":
            return int(a <= b)
        if e.op == ">":
            return int(a > b)
        if e.op == ">=":
            return int(a >= b)
        if e.op == "==":
            return int(a == b)
        if e.op == "!=":
            return int(a != b)
        if e.op == "&&":
            return int(bool(a) and bool(b))
        if e.op == "||":
            return int(bool(a) or bool(b))
    raise TypeError(f"cannot evaluate {type(e).__name__} as a constant")


def fold_constants(e):
    """Simplify an expression: fold literal arithmetic, drop +0/*1 units."""

    def fold(node):
        if not isinstance(node, Binary):
            if isinstance(node, Unary) and node.op == "-" and isinstance(node.operand, IntLit):
                return IntLit(-node.operand.value)
            return node
        left, right = node.left, node.right
        if isinstance(left, IntLit) and isinstance(right, IntLit):
            try:
                return IntLit(eval_const_expr(node))
            except (ZeroDivisionError, TypeError):
                return node
        if node.op == "+":
            if isinstance(left, IntLit) and left.value == 0:
                return right
            if isinstance(right, IntLit) and right.value == 0:
                return left
        if node.op == "-" and isinstance(right, IntLit) and right.value == 0:
            return left
        if node.op == "*":
            if isinstance(left, IntLit) and left.value == 1:
                return right
            if isinstance(right, IntLit) and right.value == 1:
                return left
            if isinstance(left, IntLit) and left.value == 0:
                return IntLit(0)
            if isinstance(right, IntLit) and right.value == 0:
                return IntLit(0)
        if node.op == "/" and isinstance(right, IntLit) and right.value == 1:
            return left
        return node

    return ast.map_expr(e, fold)


# --- integer polynomials over symbolic names -------------------------
#
# A polynomial maps a sorted tuple of symbol names (a monomial; repeats
# encode powers) to an integer coefficient.  poly_of returns None for
# expressions outside this fragment (division, loads, builtins, floats).

_DEGREE_CAP = 4


def poly_of(e, symbols) -> dict | None:
    if isinstance(e, IntLit):
        return {(): e.value} if e.value else {}
    if isinstance(e, (VarRef, ParamRef)):
        if e.name in symbols:
            return {(e.name,): 1}
        return None
    if isinstance(e, Unary):
        inner = poly_of(e.operand, symbols)
        if inner is None or e.op == "!":
            return None
        if e.op == "-":
            return {k: -v for k, v in inner.items()}
        return inner
    if isinstance(e, Binary):
        a = poly_of(e.left, symbols)
        b = poly_of(e.right, symbols)
        if a is None or b is None:
            return None
        if e.op == "+":
            return poly_add(a, b)
        if e.op == "-":
            return poly_add(a, {k: -v for k, v in b.items()})
        if e.op == "*":
            out = {}
            for k1, v1 in a.items():
                for k2, v2 in b.items():
                    key = tuple(sorted(k1 + k2))
                    if len(key) > _DEGREE_CAP:
                        return None
                    out[key] = out.get(key, 0) + v1 * v2
            return {k: v for k, v in out.items() if v}
        return None
    return None


def poly_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
        if out[k] == 0:
            del out[k]
    return out


def poly_sub(a: dict, b: dict) -> dict:
    return poly_add(a, {k: -v for k, v in b.items()})


def poly_vars(p: dict) -> set:
    out = set()
    for key in p:
        out.update(key)
    return out
