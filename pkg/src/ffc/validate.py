"""Semantic conformance checks on parsed translation units.

validate() never raises; it returns a list of diagnostics, empty iff
the unit conforms to the subset in the requested mode.  The parser
guarantees syntax only; everything name- or shape-related is here so
that generated (non-parsed) trees can be checked too.
"""
from __future__ import annotations

from . import ast
from .ast import (
    Assign, Binary, Block, BuiltinCall, ChannelRead, ChannelWrite, Decl,
    For, If, KernelDef, ParamRef, Store, Subscript, TranslationUnit, VarRef,
)
from .diagnostics import Diagnostic

MODES = ("single", "ndrange")

_REL_OPS = ("<", "<=", ">", ">=", "!=")


def _loc(node):
    s = getattr(node, "span", None)
    return (s.line, s.col) if s is not None else (0, 0)


class _KernelChecker:
    def __init__(self, kernel: KernelDef, mode: str, filename: str, out: list):
        self.kernel = kernel
        self.mode = mode
        self.filename = filename
        self.out = out
        self.pointer_params = {p.name for p in kernel.params if p.is_pointer}
        self.value_params = {p.name for p in kernel.params if not p.is_pointer}
        self.scopes = [set()]
        self.inductions = []

    def err(self, node, message, rule):
        line, col = _loc(node)
        self.out.append(Diagnostic(self.filename, line, col, "error", message, rule, getattr(node, "span", None)))

    def visible(self, name):
        return any(name in s for s in self.scopes)

    def declare(self, node, name):
        if name in self.pointer_params or name in self.value_params:
            self.err(node, f"{name!r} shadows a kernel parameter", "duplicate-name")
        elif self.visible(name):
            self.err(node, f"{name!r} redeclares a visible name", "duplicate-name")
        self.scopes[-1].add(name)

    def run(self):
        seen = set()
        for p in self.kernel.params:
            if p.name in seen:
                self.err(p, f"duplicate parameter {p.name!r}", "duplicate-name")
            seen.add(p.name)
        self.block(self.kernel.body)

    def block(self, b: Block):
        self.scopes.append(set())
        for s in b.stmts:
            self.stmt(s)
        self.scopes.pop()

    def stmt(self, s):
        if isinstance(s, Block):
            self.block(s)
        elif isinstance(s, Decl):
            if s.init is not None:
                self.expr(s.init)
            self.declare(s, s.name)
        elif isinstance(s, Assign):
            self.expr(s.value)
            self.assign_target(s, s.name)
        elif isinstance(s, Store):
            self.expr(s.index)
            self.expr(s.value)
            self.pointer_base(s, s.base)
        elif isinstance(s, If):
            self.expr(s.cond)
            self.block(s.then)
            if s.orelse is not None:
                self.block(s.orelse)
        elif isinstance(s, For):
            self.for_stmt(s)
        elif isinstance(s, ChannelWrite):
            self.expr(s.value)
        elif isinstance(s, ChannelRead):
            if s.decl_type is not None:
                self.declare(s, s.name)
            elif s.name is not None:
                self.assign_target(s, s.name)
        else:
            self.err(s, f"unknown statement {type(s).__name__}", "unsupported")

    def for_stmt(self, s: For):
        self.scopes.append(set())
        if s.var is not None:
            if s.var_type is not None:
                self.declare(s, s.var)
            else:
                self.assign_target(s, s.var)
            if s.init is not None:
                self.expr(s.init)
            if s.cond is None:
                self.err(s, "canonical loop without a condition", "non-canonical-loop")
            else:
                self.expr(s.cond)
                if not self.canonical_cond(s.cond, s.var):
                    self.err(
                        s, f"loop condition must compare the induction variable {s.var!r} on one side",
                        "non-canonical-loop",
                    )
            if s.step in (None, 0):
                self.err(s, "canonical loop requires a nonzero constant step", "non-canonical-loop")
            self.inductions.append(s.var)
            self.block(s.body)
            self.inductions.pop()
        else:
            if s.cond is not None:
                self.expr(s.cond)
            self.block(s.body)
        self.scopes.pop()

    @staticmethod
    def canonical_cond(cond, var) -> bool:
        if not isinstance(cond, Binary) or cond.op not in _REL_OPS:
            return False
        left_is_var = isinstance(cond.left, VarRef) and cond.left.name == var
        right_is_var = isinstance(cond.right, VarRef) and cond.right.name == var
        return left_is_var != right_is_var

    def assign_target(self, node, name):
        if name in self.value_params:
            self.err(node, f"cannot assign to parameter {name!r}", "assign-to-param")
        elif name in self.pointer_params:
            self.err(node, f"pointer parameter {name!r} used as a scalar", "pointer-as-value")
        elif not self.visible(name):
            self.err(node, f"assignment to undeclared name {name!r}", "undefined-name")
        if name in self.inductions:
            self.err(node, f"induction variable {name!r} reassigned inside its loop", "induction-reassigned")

    def pointer_base(self, node, base):
        if base not in self.pointer_params:
            self.err(node, f"subscript base {base!r} is not a pointer parameter", "subscript-base")

    def expr(self, e):
        for sub in ast.walk_exprs(e):
            if isinstance(sub, VarRef):
                if sub.name in self.pointer_params:
                    self.err(sub, f"pointer parameter {sub.name!r} used as a value", "pointer-as-value")
                elif not self.visible(sub.name):
                    self.err(sub, f"undefined name {sub.name!r}", "undefined-name")
            elif isinstance(sub, ParamRef):
                if sub.name not in self.value_params:
                    self.err(sub, f"undefined parameter {sub.name!r}", "undefined-name")
            elif isinstance(sub, Subscript):
                self.pointer_base(sub, sub.base)
            elif isinstance(sub, BuiltinCall):
                if self.mode != "ndrange":
                    self.err(
                        sub,
                        f"{sub.name} requires ndrange mode (single work-item kernels have no work-item identity)",
                        "workitem-builtin",
                    )


def validate(unit: TranslationUnit, mode: str = "single", filename: str = "<input>") -> list:
    """Check subset and mode conformance; empty result means conforming."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    out = []

    seen_kernels = set()
    for k in unit.kernels:
        if k.name in seen_kernels:
            line, col = _loc(k)
            out.append(Diagnostic(filename, line, col, "error", f"duplicate kernel {k.name!r}", "duplicate-name", k.span))
        seen_kernels.add(k.name)

    declared = {}
    for c in unit.channels:
        if c.name in declared:
            line, col = _loc(c)
            out.append(Diagnostic(filename, line, col, "error", f"duplicate channel {c.name!r}", "duplicate-name", c.span))
        declared[c.name] = c
        if c.min_depth < 1:
            line, col = _loc(c)
            out.append(Diagnostic(filename, line, col, "error", f"channel {c.name!r} depth must be >= 1", "channel-depth", c.span))

    writers, readers = {}, {}
    for k in unit.kernels:
        for s in ast.walk_stmts(k.body):
            if isinstance(s, (ChannelWrite, ChannelRead)):
                chan = s.channel
                if chan not in declared:
                    line, col = _loc(s)
                    out.append(Diagnostic(filename, line, col, "error", f"channel {chan!r} is not declared", "channel-undeclared", s.span))
                    continue
                side = writers if isinstance(s, ChannelWrite) else readers
                side.setdefault(chan, set()).add(k.name)
    for chan, ks in writers.items():
        if len(ks) > 1:
            out.append(Diagnostic(filename, 0, 0, "error", f"channel {chan!r} has multiple writers: {sorted(ks)}", "channel-endpoints"))
    for chan, ks in readers.items():
        if len(ks) > 1:
            out.append(Diagnostic(filename, 0, 0, "error", f"channel {chan!r} has multiple readers: {sorted(ks)}", "channel-endpoints"))
    for chan in sorted(set(writers) & set(readers)):
        both = writers[chan] & readers[chan]
        if both:
            out.append(Diagnostic(filename, 0, 0, "error", f"kernel {sorted(both)[0]!r} both writes and reads channel {chan!r}", "channel-endpoints"))

    for k in unit.kernels:
        _KernelChecker(k, mode, filename, out).run()
    return out


def type_env(kernel: KernelDef) -> dict:
    """Flat name -> scalar type map for a kernel (params, decls, loop vars).

    Names are unique along any lexical path (validate enforces it), so a
    flat map is sufficient; for sibling-scope reuse the first declared
    type wins, which is only ambiguous for ill-typed inputs.
    """
    env = {}
    for p in kernel.params:
        env.setdefault(p.name, p.type)
    for s in ast.walk_stmts(kernel.body):
        if isinstance(s, Decl):
            env.setdefault(s.name, s.type)
        elif isinstance(s, ChannelRead) and s.decl_type is not None:
            env.setdefault(s.name, s.decl_type)
        elif isinstance(s, For) and s.var is not None and s.var_type is not None:
            env.setdefault(s.var, s.var_type)
    return env


_RANK = {"bool": 0, "int": 1, "uint": 2, "long": 3, "ulong": 4, "float": 5, "double": 6}


def infer_type(e, env: dict, pointer_types: dict = None) -> str:
    """Best-effort static type of an expression under a flat type env.

    pointer_types maps pointer param name -> element type; when omitted
    subscripts fall back to "int".
    """
    pointer_types = pointer_types or {}
    if isinstance(e, ast.IntLit):
        return "int"
    if isinstance(e, ast.FloatLit):
        return "float"
    if isinstance(e, (VarRef, ParamRef)):
        return env.get(e.name, "int")
    if isinstance(e, Subscript):
        return pointer_types.get(e.base, env.get(e.base, "int"))
    if isinstance(e, BuiltinCall):
        return "int"
    if isinstance(e, ast.Unary):
        if e.op == "!":
            return "int"
        return infer_type(e.operand, env, pointer_types)
    if isinstance(e, Binary):
        if e.op in ("==", "!=", "<", "<=", ">", ">=", "&&", "||"):
            return "int"
        lt = infer_type(e.left, env, pointer_types)
        rt = infer_type(e.right, env, pointer_types)
        return lt if _RANK[lt] >= _RANK[rt] else rt
    raise TypeError(f"cannot type {type(e).__name__}")


def pointer_type_map(kernel: KernelDef) -> dict:
    return {p.name: p.type for p in kernel.params if p.is_pointer}
