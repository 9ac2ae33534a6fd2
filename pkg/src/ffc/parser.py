"""Recursive-descent parser for the OpenCL-C subset.

parse() raises FrontendError carrying one or more diagnostics when the
input is outside the subset; structural conformance beyond syntax
(name resolution, canonical loop shape, address-space rules) lives in
validate(), not here.
"""
from __future__ import annotations

from . import ast
from .ast import (
    Assign, Binary, Block, BuiltinCall, ChannelRead, ChannelSpec, ChannelWrite,
    Decl, FloatLit, For, If, IntLit, KernelDef, Param, ParamRef, Store,
    Subscript, TranslationUnit, Unary, VarRef,
)
from .diagnostics import Diagnostic, FrontendError
from .lexer import Token, tokenize

_SPACE_KW = {
    "global": "global", "__global": "global",
    "constant": "constant", "__constant": "constant",
    "local": "local", "__local": "local",
}
_BUILTINS = ("get_global_id", "get_local_id", "get_group_id")
_UNSUPPORTED_KW = ("goto", "switch", "do", "return", "break", "continue", "struct")
_UNSUPPORTED_OPS = ("<<", ">>", "&", "|", "^", "~", "?", ":")

# binary precedence, loosest first
_BIN_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
)


def _is_vector_type(name: str) -> bool:
    for base in ast.SCALAR_TYPES:
        if name.startswith(base) and name[len(base):] in ("2", "3", "4", "8", "16"):
            return True
    return False


class _Parser:
    def __init__(self, tokens, filename):
        self.toks = tokens
        self.pos = 0
        self.filename = filename

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, kind: str, text: str = None) -> bool:
        return self.peek().is_(kind, text)

    def accept(self, kind: str, text: str = None):
        if self.at(kind, text):
            return self.advance()
        return None

    def expect(self, kind: str, text: str = None) -> Token:
        if self.at(kind, text):
            return self.advance()
        got = self.peek()
        want = text or kind
        self.fail(f"expected {want!r}, found {got.text or got.kind!r}", "syntax", got)

    def fail(self, message: str, rule: str, tok: Token = None):
        tok = tok or self.peek()
        raise FrontendError(
            [Diagnostic(self.filename, tok.span.line, tok.span.col, "error", message, rule, tok.span)]
        )

    # --- top level ---------------------------------------------------

    def unit(self) -> TranslationUnit:
        channels, kernels = [], []
        while not self.at("eof"):
            if self.at("keyword", "channel"):
                channels.append(self.channel_decl())
            elif self.at("keyword", "__kernel") or self.at("keyword", "kernel") or self.at("keyword", "void"):
                kernels.append(self.kernel())
            else:
                tok = self.peek()
                if tok.kind == "keyword" and tok.text in _UNSUPPORTED_KW:
                    self.fail(f"unsupported construct {tok.text!r}", "unsupported", tok)
                self.fail(f"expected kernel or channel declaration, found {tok.text!r}", "syntax", tok)
        return TranslationUnit(channels=tuple(channels), kernels=tuple(kernels))

    def channel_decl(self) -> ChannelSpec:
        start = self.expect("keyword", "channel")
        ty = self.scalar_type()
        name = self.expect("ident").text
        depth = 1
        if self.accept("keyword", "__attribute__"):
            self.expect("punct", "(")
            self.expect("punct", "(")
            attr = self.expect("ident")
            if attr.text != "depth":
                self.fail(f"unsupported channel attribute {attr.text!r}", "unsupported", attr)
            self.expect("punct", "(")
            depth = int(self.expect("int").text)
            self.expect("punct", ")")
            self.expect("punct", ")")
            self.expect("punct", ")")
        self.expect("punct", ";")
        return ChannelSpec(name=name, elem_type=ty, min_depth=depth, span=start.span)

    def scalar_type(self) -> str:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text in ast.SCALAR_TYPES:
            self.advance()
            return tok.text
        if tok.kind == "ident" and _is_vector_type(tok.text):
            self.fail(f"vector types are not supported ({tok.text!r})", "vector-type", tok)
        self.fail(f"expected a scalar type, found {tok.text!r}", "syntax", tok)

    def kernel(self) -> KernelDef:
        start = self.peek()
        if not (self.accept("keyword", "__kernel") or self.accept("keyword", "kernel")):
            self.fail("kernel definitions must start with __kernel", "syntax")
        self.expect("keyword", "void")
        name = self.expect("ident").text
        self.expect("punct", "(")
        params = []
        if not self.at("punct", ")"):
            params.append(self.param())
            while self.accept("punct", ","):
                params.append(self.param())
        self.expect("punct", ")")
        body = self.block()
        kernel = KernelDef(name=name, params=tuple(params), body=body, span=start.span)
        return self._resolve_params(kernel)

    def param(self) -> Param:
        start = self.peek()
        space = None
        while self.at("keyword"):
            text = self.peek().text
            if text == "const":
                self.advance()
                continue
            if text in _SPACE_KW:
                if space is not None:
                    self.fail("duplicate address space qualifier", "syntax")
                space = _SPACE_KW[text]
                self.advance()
                continue
            break
        ty = self.scalar_type()
        is_ptr = bool(self.accept("op", "*"))
        if self.at("op", "*"):
            self.fail("multi-level pointers are not supported", "unsupported")
        restrict = False
        while self.at("keyword", "restrict") or self.at("keyword", "const"):
            if self.advance().text == "restrict":
                restrict = True
        name = self.expect("ident").text
        if self.at("punct", "["):
            self.fail("array parameters are not supported; use a pointer", "unsupported")
        if is_ptr:
            if space is None:
                self.fail(f"pointer parameter {name!r} requires an address space qualifier", "unsupported", start)
            return Param(name=name, type=ty, space=space, restrict=restrict, span=start.span)
        if space is not None:
            self.fail(f"address space qualifier on value parameter {name!r}", "unsupported", start)
        return Param(name=name, type=ty, space="value", span=start.span)

    # --- statements --------------------------------------------------

    def block(self) -> Block:
        start = self.expect("punct", "{")
        stmts = []
        while not self.at("punct", "}"):
            if self.at("eof"):
                self.fail("unterminated block", "syntax")
            s = self.statement()
            if s is not None:
                stmts.append(s)
        self.expect("punct", "}")
        return Block(stmts=tuple(stmts), span=start.span)

    def statement(self):
        tok = self.peek()
        if tok.is_("punct", ";"):
            self.advance()
            return None
        if tok.is_("punct", "{"):
            return self.block()
        if tok.kind == "keyword":
            if tok.text == "if":
                return self.if_stmt()
            if tok.text == "for":
                return self.for_stmt()
            if tok.text == "while":
                return self.while_stmt()
            if tok.text in ast.SCALAR_TYPES or tok.text == "const":
                return self.decl_stmt()
            if tok.text in _UNSUPPORTED_KW:
                self.fail(f"unsupported construct {tok.text!r}", "unsupported", tok)
            self.fail(f"unexpected keyword {tok.text!r}", "syntax", tok)
        if tok.kind == "ident" and _is_vector_type(tok.text) and self.peek(1).kind == "ident":
            self.fail(f"vector types are not supported ({tok.text!r})", "vector-type", tok)
        if tok.is_("ident", "write_channel_intel"):
            return self.channel_write_stmt()
        if tok.is_("ident", "read_channel_intel"):
            self.advance()
            self.expect("punct", "(")
            chan = self.expect("ident").text
            self.expect("punct", ")")
            self.expect("punct", ";")
            return ChannelRead(name=None, channel=chan, span=tok.span)
        return self.assign_like_stmt()

    def if_stmt(self) -> If:
        start = self.expect("keyword", "if")
        self.expect("punct", "(")
        cond = self.expression()
        self.expect("punct", ")")
        then = self._branch()
        orelse = None
        if self.accept("keyword", "else"):
            orelse = self._branch()
        return If(cond=cond, then=then, orelse=orelse, span=start.span)

    def _branch(self) -> Block:
        s = self.statement()
        if isinstance(s, Block):
            return s
        stmts = () if s is None else (s,)
        return Block(stmts=stmts, span=s.span if s is not None else None)

    def while_stmt(self) -> For:
        start = self.expect("keyword", "while")
        self.expect("punct", "(")
        cond = self.expression()
        self.expect("punct", ")")
        body = self._branch()
        return For(var=None, var_type=None, init=None, cond=cond, step=None, body=body, span=start.span)

    def for_stmt(self) -> For:
        start = self.expect("keyword", "for")
        self.expect("punct", "(")
        var = var_type = init = None
        if not self.at("punct", ";"):
            if self.at("keyword") and self.peek().text in ast.SCALAR_TYPES:
                var_type = self.scalar_type()
                var = self.expect("ident").text
                self.expect("op", "=")
                init = self.expression()
            else:
                var = self.expect("ident").text
                self.expect("op", "=")
                init = self.expression()
        self.expect("punct", ";")
        if self.at("punct", ";"):
            self.fail("for loop requires a condition", "unsupported")
        cond = self.expression()
        self.expect("punct", ";")
        step = None
        step_var = None
        if not self.at("punct", ")"):
            step_var, step = self.for_step()
        self.expect("punct", ")")
        body = self._branch()
        if var is None and step is not None:
            self.fail("for loop step without an induction variable", "syntax", start)
        if var is not None:
            if step is None:
                self.fail("canonical for loops require a constant additive step", "unsupported", start)
            if step_var != var:
                self.fail(
                    f"loop step updates {step_var!r} but the induction variable is {var!r}",
                    "non-canonical-loop", start,
                )
        return For(var=var, var_type=var_type, init=init, cond=cond, step=step, body=body, span=start.span)

    def for_step(self):
        name = self.expect("ident").text
        if self.accept("op", "++"):
            return name, 1
        if self.accept("op", "--"):
            return name, -1
        if self.accept("op", "+="):
            return name, self._const_int()
        if self.accept("op", "-="):
            return name, -self._const_int()
        if self.accept("op", "="):
            lhs = self.expect("ident").text
            if lhs != name:
                self.fail("loop step must update its own variable", "non-canonical-loop")
            op = self.peek()
            if op.is_("op", "+") or op.is_("op", "-"):
                self.advance()
                v = self._const_int()
                return name, v if op.text == "+" else -v
            self.fail("loop step must be a constant additive update", "unsupported", op)
        self.fail("loop step must be a constant additive update", "unsupported")

    def _const_int(self) -> int:
        neg = bool(self.accept("op", "-"))
        tok = self.expect("int")
        v = int(tok.text)
        return -v if neg else v

    def decl_stmt(self):
        while self.accept("keyword", "const"):
            pass
        start = self.peek()
        ty = self.scalar_type()
        if self.at("op", "*"):
            self.fail("local pointer declarations are not supported", "unsupported")
        name = self.expect("ident").text
        init = None
        node = None
        if self.accept("op", "="):
            if self.at("ident", "read_channel_intel"):
                self.advance()
                self.expect("punct", "(")
                chan = self.expect("ident").text
                self.expect("punct", ")")
                node = ChannelRead(name=name, channel=chan, decl_type=ty, span=start.span)
            else:
                init = self.expression()
        self.expect("punct", ";")
        return node if node is not None else Decl(name=name, type=ty, init=init, span=start.span)

    def channel_write_stmt(self) -> ChannelWrite:
        start = self.expect("ident", "write_channel_intel")
        self.expect("punct", "(")
        chan = self.expect("ident").text
        self.expect("punct", ",")
        value = self.expression()
        self.expect("punct", ")")
        self.expect("punct", ";")
        return ChannelWrite(channel=chan, value=value, span=start.span)

    def assign_like_stmt(self):
        start = self.peek()
        if self.accept("op", "*"):
            base = self.expect("ident").text
            self.expect("op", "=")
            value = self.expression()
            self.expect("punct", ";")
            return Store(base=base, index=IntLit(0, span=start.span), value=value, span=start.span)
        name_tok = self.expect("ident")
        name = name_tok.text
        if self.accept("punct", "["):
            index = self.expression()
            self.expect("punct", "]")
            op = self.peek()
            if op.text in ("+=", "-=", "*=", "/=", "%="):
                self.advance()
                rhs = self.expression()
                self.expect("punct", ";")
                load = Subscript(base=name, index=index, span=start.span)
                value = Binary(op.text[0], load, rhs, span=op.span)
                return Store(base=name, index=index, value=value, span=start.span)
            self.expect("op", "=")
            value = self.expression()
            self.expect("punct", ";")
            return Store(base=name, index=index, value=value, span=start.span)
        op = self.peek()
        if op.text in ("+=", "-=", "*=", "/=", "%="):
            self.advance()
            rhs = self.expression()
            self.expect("punct", ";")
            value = Binary(op.text[0], VarRef(name, span=name_tok.span), rhs, span=op.span)
            return Assign(name=name, value=value, span=start.span)
        if op.is_("op", "++") or op.is_("op", "--"):
            self.advance()
            self.expect("punct", ";")
            binop = "+" if op.text == "++" else "-"
            value = Binary(binop, VarRef(name, span=name_tok.span), IntLit(1), span=op.span)
            return Assign(name=name, value=value, span=start.span)
        if self.accept("op", "="):
            if self.at("ident", "read_channel_intel"):
                self.advance()
                self.expect("punct", "(")
                chan = self.expect("ident").text
                self.expect("punct", ")")
                self.expect("punct", ";")
                return ChannelRead(name=name, channel=chan, span=start.span)
            value = self.expression()
            self.expect("punct", ";")
            return Assign(name=name, value=value, span=start.span)
        if op.kind == "punct" and op.text == "(":
            self.fail(f"unsupported construct: call to {name!r}", "unsupported", name_tok)
        self.fail(f"expected a statement, found {name!r}", "syntax", name_tok)

    # --- expressions -------------------------------------------------

    def expression(self):
        return self.binary(0)

    def binary(self, level: int):
        if level >= len(_BIN_LEVELS):
            return self.unary()
        lhs = self.binary(level + 1)
        ops = _BIN_LEVELS[level]
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in _UNSUPPORTED_OPS:
                self.fail(f"unsupported operator {tok.text!r}", "unsupported", tok)
            if tok.kind == "op" and tok.text in ops:
                self.advance()
                rhs = self.binary(level + 1)
                lhs = Binary(tok.text, lhs, rhs, span=tok.span)
            else:
                return lhs

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text in ("-", "+", "!"):
            self.advance()
            return Unary(tok.text, self.unary(), span=tok.span)
        if tok.is_("op", "*"):
            self.advance()
            inner = self.unary()
            if isinstance(inner, VarRef):
                return Subscript(base=inner.name, index=IntLit(0, span=tok.span), span=tok.span)
            self.fail("pointer arithmetic is not supported", "unsupported", tok)
        return self.postfix()

    def postfix(self):
        e = self.primary()
        while self.at("punct", "["):
            if not isinstance(e, VarRef):
                self.fail("only named pointers can be subscripted", "unsupported")
            open_tok = self.advance()
            index = self.expression()
            self.expect("punct", "]")
            e = Subscript(base=e.name, index=index, span=open_tok.span)
            if self.at("punct", "["):
                self.fail("multi-dimensional subscripts are not supported", "unsupported")
        return e

    def primary(self):
        tok = self.peek()
        if tok.kind == "int":
            self.advance()
            return IntLit(int(tok.text), span=tok.span)
        if tok.kind == "float":
            self.advance()
            return FloatLit(float(tok.text), span=tok.span)
        if tok.is_("punct", "("):
            self.advance()
            e = self.expression()
            self.expect("punct", ")")
            return e
        if tok.kind == "ident":
            self.advance()
            if self.at("punct", "("):
                if tok.text in _BUILTINS:
                    self.advance()
                    dim_tok = self.expect("int")
                    self.expect("punct", ")")
                    return BuiltinCall(name=tok.text, dim=int(dim_tok.text), span=tok.span)
                if tok.text == "read_channel_intel":
                    self.fail(
                        "read_channel_intel may only initialize a declaration or a plain assignment",
                        "unsupported", tok,
                    )
                self.fail(f"unsupported construct: call to {tok.text!r}", "unsupported", tok)
            return VarRef(tok.text, span=tok.span)
        if tok.kind == "keyword" and tok.text in ast.SCALAR_TYPES:
            self.fail(f"unexpected type name {tok.text!r} in expression (casts are not supported)", "unsupported", tok)
        self.fail(f"expected an expression, found {tok.text or tok.kind!r}", "syntax", tok)

    # --- post-parse resolution ----------------------------------------

    def _resolve_params(self, kernel: KernelDef) -> KernelDef:
        """Rewrite VarRefs that name value params into ParamRefs."""
        value_params = {p.name for p in kernel.params if not p.is_pointer}

        def repl(e):
            if isinstance(e, VarRef) and e.name in value_params:
                return ParamRef(e.name, span=e.span)
            return e

        return ast.KernelDef(
            name=kernel.name,
            params=kernel.params,
            body=ast.map_exprs_deep(kernel.body, repl),
            span=kernel.span,
        )


def derive_channel_endpoints(unit: TranslationUnit) -> TranslationUnit:
    """Fill ChannelSpec.writer/reader from kernel usage."""
    writers, readers = {}, {}
    for k in unit.kernels:
        for s in ast.walk_stmts(k.body):
            if isinstance(s, ChannelWrite):
                writers.setdefault(s.channel, k.name)
            elif isinstance(s, ChannelRead):
                readers.setdefault(s.channel, k.name)
    channels = tuple(
        ChannelSpec(
            name=c.name, elem_type=c.elem_type, min_depth=c.min_depth,
            writer=writers.get(c.name, ""), reader=readers.get(c.name, ""),
            origin=c.origin, span=c.span,
        )
        for c in unit.channels
    )
    return TranslationUnit(channels=channels, kernels=unit.kernels, span=unit.span)


def parse(source: str, filename: str = "<input>") -> TranslationUnit:
    """Parse a translation unit; raises FrontendError outside the subset.

    Every kernel in the result is numbered (loop ids, load/store sites)
    and channel endpoints are derived from usage.
    """
    tokens = tokenize(source, filename)
    unit = _Parser(tokens, filename).unit()
    unit = TranslationUnit(
        channels=unit.channels,
        kernels=tuple(ast.number_kernel(k) for k in unit.kernels),
        span=unit.span,
    )
    return derive_channel_endpoints(unit)


def parse_expression(source: str, filename: str = "<expr>") -> ast.Expr:
    """Parse a single expression (used for bounds/length expressions)."""
    tokens = tokenize(source, filename)
    p = _Parser(tokens, filename)
    e = p.expression()
    if not p.at("eof"):
        p.fail("trailing tokens after expression", "syntax")
    return e
