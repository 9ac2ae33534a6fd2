"""Deterministic pretty-printer; inverse of parse() up to metadata."""
from __future__ import annotations

from . import ast
from .ast import (
    Assign, Binary, Block, BuiltinCall, ChannelRead, ChannelSpec, ChannelWrite,
    Decl, FloatLit, For, If, IntLit, KernelDef, Param, ParamRef, Store,
    Subscript, TranslationUnit, Unary, VarRef,
)

_LEVEL = {
    "||": 1, "&&": 2, "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "%": 6,
}
_UNARY_LEVEL = 7
_INDENT = "    "


def emit_expr(e, parent_level: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        text = repr(float(e.value))
        return text
    if isinstance(e, (VarRef, ParamRef)):
        return e.name
    if isinstance(e, Subscript):
        return f"{e.base}[{emit_expr(e.index)}]"
    if isinstance(e, BuiltinCall):
        return f"{e.name}({e.dim})"
    if isinstance(e, Unary):
        inner = emit_expr(e.operand, _UNARY_LEVEL)
        if not isinstance(e.operand, (IntLit, FloatLit, VarRef, ParamRef, Subscript, BuiltinCall)):
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, Binary):
        level = _LEVEL[e.op]
        left = emit_expr(e.left, level)
        # right side re-parenthesized at same level to keep associativity
        right = emit_expr(e.right, level + 1)
        text = f"{left} {e.op} {right}"
        if level < parent_level:
            return f"({text})"
        return text
    raise TypeError(f"cannot emit {type(e).__name__}")


def _step_text(var: str, step: int) -> str:
    if step == 1:
        return f"{var}++"
    if step == -1:
        return f"{var}--"
    if step >= 0:
        return f"{var} += {step}"
    return f"{var} -= {-step}"


def emit_stmt(s, indent: int = 0) -> str:
    pad = _INDENT * indent
    if isinstance(s, Block):
        inner = "".join(emit_stmt(c, indent + 1) for c in s.stmts)
        return f"{pad}{{\n{inner}{pad}}}\n"
    if isinstance(s, Decl):
        if s.init is None:
            return f"{pad}{s.type} {s.name};\n"
        return f"{pad}{s.type} {s.name} = {emit_expr(s.init)};\n"
    if isinstance(s, Assign):
        return f"{pad}{s.name} = {emit_expr(s.value)};\n"
    if isinstance(s, Store):
        return f"{pad}{s.base}[{emit_expr(s.index)}] = {emit_expr(s.value)};\n"
    if isinstance(s, If):
        text = f"{pad}if ({emit_expr(s.cond)}) {{\n"
        text += "".join(emit_stmt(c, indent + 1) for c in s.then.stmts)
        if s.orelse is not None:
            text += f"{pad}}} else {{\n"
            text += "".join(emit_stmt(c, indent + 1) for c in s.orelse.stmts)
        text += f"{pad}}}\n"
        return text
    if isinstance(s, For):
        if s.var is None:
            text = f"{pad}while ({emit_expr(s.cond)}) {{\n"
        else:
            decl = f"{s.var_type} " if s.var_type else ""
            head = f"{decl}{s.var} = {emit_expr(s.init)}; {emit_expr(s.cond)}; {_step_text(s.var, s.step)}"
            text = f"{pad}for ({head}) {{\n"
        text += "".join(emit_stmt(c, indent + 1) for c in s.body.stmts)
        text += f"{pad}}}\n"
        return text
    if isinstance(s, ChannelWrite):
        return f"{pad}write_channel_intel({s.channel}, {emit_expr(s.value)});\n"
    if isinstance(s, ChannelRead):
        call = f"read_channel_intel({s.channel})"
        if s.decl_type is not None:
            return f"{pad}{s.decl_type} {s.name} = {call};\n"
        if s.name is not None:
            return f"{pad}{s.name} = {call};\n"
        return f"{pad}{call};\n"
    raise TypeError(f"cannot emit {type(s).__name__}")


def emit_param(p: Param) -> str:
    if not p.is_pointer:
        return f"{p.type} {p.name}"
    space = {"global": "__global", "constant": "__constant", "local": "__local"}[p.space]
    restrict = " restrict" if p.restrict else ""
    return f"{space} {p.type}*{restrict} {p.name}"


def emit_kernel(k: KernelDef) -> str:
    params = ", ".join(emit_param(p) for p in k.params)
    body = "".join(emit_stmt(s, 1) for s in k.body.stmts)
    return f"__kernel void {k.name}({params}) {{\n{body}}}\n"


def emit_channel(c: ChannelSpec) -> str:
    return f"channel {c.elem_type} {c.name} __attribute__((depth({c.min_depth})));\n"


def emit(unit: TranslationUnit) -> str:
    parts = []
    if unit.channels:
        parts.append("".join(emit_channel(c) for c in unit.channels))
    parts.extend(emit_kernel(k) for k in unit.kernels)
    return "\n".join(parts)
