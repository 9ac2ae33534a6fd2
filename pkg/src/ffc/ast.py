"""AST for the OpenCL-C subset the toolchain operates on.

Nodes are frozen dataclasses, so rewrites build new trees with
``dataclasses.replace`` instead of mutating in place.  Equality is
structural: source spans, load/store site numbers, and loop ids are
metadata and excluded from comparison, which is what makes
``parse(emit(unit)) == unit`` a meaningful round-trip property.

Shape of the subset:

* one translation unit = channel declarations + kernel definitions
* kernel params are scalar values or pointers into an address space;
  pointers only ever appear as subscript bases (``*p`` is normalized
  to ``p[0]`` by the parser)
* statements: declarations, scalar assignments, pointer stores, if,
  canonical for (single induction variable, constant additive step),
  while (desugared to a For with no induction variable), blocks, and
  blocking channel writes/reads
* expressions: literals, scalar variable/param references, loads
  (Subscript), unary/binary operators, and the work-item builtins
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Iterator, Optional, Union

SCALAR_TYPES = ("int", "uint", "long", "ulong", "float", "double", "bool")
INT_TYPES = frozenset(("int", "uint", "long", "ulong", "bool"))
FLOAT_TYPES = frozenset(("float", "double"))
ADDRESS_SPACES = ("global", "constant", "local", "value")

# Width and signedness used for wrap-on-assignment semantics.
TYPE_BITS = {"int": 32, "uint": 32, "long": 64, "ulong": 64, "bool": 1}
TYPE_SIGNED = {"int": True, "uint": False, "long": True, "ulong": False, "bool": False}


@dataclass(frozen=True)
class Span:
    """Half-open byte range [start, end) plus 1-based line/col of start."""

    start: int
    end: int
    line: int
    col: int


def _meta(default=None):
    # span / site / loop_id fields: carried along, never compared.
    return field(default=default, compare=False, repr=False)


class Node:
    __slots__ = ()


class Expr(Node):
    __slots__ = ()


class Stmt(Node):
    __slots__ = ()


@dataclass(frozen=True)
class IntLit(Expr):
    value: int
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class FloatLit(Expr):
    value: float
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class VarRef(Expr):
    """Reference to a local scalar (declaration or induction variable)."""

    name: str
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class ParamRef(Expr):
    """Reference to a value (non-pointer) kernel parameter."""

    name: str
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class Subscript(Expr):
    """A load ``base[index]`` when used as an rvalue.

    ``base`` names a pointer parameter of the enclosing kernel.  ``site``
    is a stable per-kernel occurrence number assigned by
    ``number_kernel``; the Subscript inside a Store node's lvalue is not
    a load and carries its site on the Store itself.
    """

    base: str
    index: Expr
    span: Optional[Span] = _meta()
    site: Optional[int] = _meta()


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "-", "+", "!"
    operand: Expr
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # arithmetic, relational, equality, "&&", "||"
    left: Expr
    right: Expr
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class BuiltinCall(Expr):
    """Work-item query: get_global_id / get_local_id / get_group_id."""

    name: str
    dim: int
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class Block(Stmt):
    stmts: tuple = ()
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class Decl(Stmt):
    name: str
    type: str
    init: Optional[Expr] = None
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class Assign(Stmt):
    """Assignment to a scalar local. Compound ops are desugared by the parser."""

    name: str
    value: Expr
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class Store(Stmt):
    """``base[index] = value`` where base is a pointer param."""

    base: str
    index: Expr
    value: Expr
    span: Optional[Span] = _meta()
    site: Optional[int] = _meta()


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then: Block
    orelse: Optional[Block] = None
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class For(Stmt):
    """Loop node covering both canonical for loops and desugared whiles.

    Canonical form: ``var`` is the single induction variable (declared in
    the init clause when ``var_type`` is set), ``init`` its starting
    expression, ``cond`` the full condition expression, and ``step`` the
    constant additive update.  A while loop desugars to ``var=None,
    init=None, step=None`` with only ``cond`` populated; such loops have
    unknown trip counts and are refused by passes that need bounds.
    """

    var: Optional[str]
    var_type: Optional[str]
    init: Optional[Expr]
    cond: Optional[Expr]
    step: Optional[int]
    body: Block
    span: Optional[Span] = _meta()
    loop_id: Optional[int] = _meta()


@dataclass(frozen=True)
class ChannelWrite(Stmt):
    """Blocking ``write_channel_intel(channel, value)``."""

    channel: str
    value: Expr
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class ChannelRead(Stmt):
    """Blocking ``read_channel_intel(channel)`` in one of three shapes.

    ``decl_type`` set: declaration form ``int v = read_channel_intel(c);``
    ``decl_type`` None, ``name`` set: assignment to an existing scalar.
    both None: bare read whose value is discarded (the read still
    happens; channel protocol is an effect).
    """

    name: Optional[str]
    channel: str
    decl_type: Optional[str] = None
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class Param:
    name: str
    type: str  # element type for pointers, value type otherwise
    space: str  # "global" | "constant" | "local" | "value"
    restrict: bool = False
    span: Optional[Span] = _meta()

    @property
    def is_pointer(self) -> bool:
        return self.space != "value"


@dataclass(frozen=True)
class ChannelSpec:
    """A channel declaration plus its derived endpoint wiring.

    ``writer``/``reader`` name the kernels holding the single write/read
    side; they are derived from usage (or assigned by the splitter), not
    from source text, so they are excluded from structural equality.
    ``origin`` records which load class produced a splitter-made channel.
    """

    name: str
    elem_type: str
    min_depth: int = 1
    writer: str = field(default="", compare=False)
    reader: str = field(default="", compare=False)
    origin: str = field(default="", compare=False)
    span: Optional[Span] = _meta()


@dataclass(frozen=True)
class KernelDef:
    name: str
    params: tuple
    body: Block
    span: Optional[Span] = _meta()

    def param(self, name: str) -> Optional[Param]:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class TranslationUnit:
    channels: tuple = ()
    kernels: tuple = ()
    span: Optional[Span] = _meta()

    def kernel(self, name: str) -> Optional[KernelDef]:
        for k in self.kernels:
            if k.name == name:
                return k
        return None


LValue = Union[Assign, Store]


# --- traversal helpers -------------------------------------------------


def child_exprs(node) -> Iterator[Expr]:
    """Direct sub-expressions of a statement or expression node."""
    if isinstance(node, (Unary,)):
        yield node.operand
    elif isinstance(node, Binary):
        yield node.left
        yield node.right
    elif isinstance(node, Subscript):
        yield node.index
    elif isinstance(node, Decl):
        if node.init is not None:
            yield node.init
    elif isinstance(node, Assign):
        yield node.value
    elif isinstance(node, Store):
        yield node.index
        yield node.value
    elif isinstance(node, If):
        yield node.cond
    elif isinstance(node, For):
        if node.init is not None:
            yield node.init
        if node.cond is not None:
            yield node.cond
    elif isinstance(node, ChannelWrite):
        yield node.value


def walk_exprs(node) -> Iterator[Expr]:
    """All expressions under a statement or expression, preorder.

    For Subscript nodes the index is visited after the node itself; use
    ``walk_exprs_postorder`` when evaluation order matters.
    """
    stack = list(child_exprs(node))
    if isinstance(node, Expr):
        stack = [node]
    while stack:
        e = stack.pop(0)
        yield e
        stack[0:0] = list(child_exprs(e))


def walk_exprs_postorder(e: Expr) -> Iterator[Expr]:
    """Expressions in C evaluation order (operands before operators)."""
    for c in child_exprs(e):
        yield from walk_exprs_postorder(c)
    yield e


def walk_stmts(stmt: Stmt) -> Iterator[Stmt]:
    """All statements under (and including) ``stmt``, preorder."""
    yield stmt
    if isinstance(stmt, Block):
        for s in stmt.stmts:
            yield from walk_stmts(s)
    elif isinstance(stmt, If):
        yield from walk_stmts(stmt.then)
        if stmt.orelse is not None:
            yield from walk_stmts(stmt.orelse)
    elif isinstance(stmt, For):
        yield from walk_stmts(stmt.body)


def expr_names(e: Expr) -> set:
    """Names of locals and value params referenced anywhere in ``e``."""
    out = set()
    if isinstance(e, Expr):
        for sub in walk_exprs(e):
            if isinstance(sub, (VarRef, ParamRef)):
                out.add(sub.name)
    return out


def stmt_read_names(stmt: Stmt) -> set:
    """Scalar names read by the statement itself (not its children blocks)."""
    out = set()
    for e in child_exprs(stmt):
        out |= expr_names(e)
    return out


def map_expr(e: Expr, fn) -> Expr:
    """Rebuild ``e`` bottom-up, applying ``fn`` to every node."""
    if isinstance(e, Unary):
        e = replace(e, operand=map_expr(e.operand, fn))
    elif isinstance(e, Binary):
        e = replace(e, left=map_expr(e.left, fn), right=map_expr(e.right, fn))
    elif isinstance(e, Subscript):
        e = replace(e, index=map_expr(e.index, fn))
    return fn(e)


def substitute(e: Expr, bindings: dict) -> Expr:
    """Replace VarRef/ParamRef nodes by name with replacement expressions."""

    def repl(sub):
        if isinstance(sub, (VarRef, ParamRef)) and sub.name in bindings:
            return bindings[sub.name]
        return sub

    return map_expr(e, repl)


def map_stmt_exprs(stmt: Stmt, fn) -> Stmt:
    """Apply ``fn`` (via map_expr) to the expressions held directly by one
    statement node, without descending into nested blocks."""
    if isinstance(stmt, Decl) and stmt.init is not None:
        return replace(stmt, init=map_expr(stmt.init, fn))
    if isinstance(stmt, Assign):
        return replace(stmt, value=map_expr(stmt.value, fn))
    if isinstance(stmt, Store):
        return replace(stmt, index=map_expr(stmt.index, fn), value=map_expr(stmt.value, fn))
    if isinstance(stmt, If):
        return replace(stmt, cond=map_expr(stmt.cond, fn))
    if isinstance(stmt, For):
        init = map_expr(stmt.init, fn) if stmt.init is not None else None
        cond = map_expr(stmt.cond, fn) if stmt.cond is not None else None
        return replace(stmt, init=init, cond=cond)
    if isinstance(stmt, ChannelWrite):
        return replace(stmt, value=map_expr(stmt.value, fn))
    return stmt


def map_exprs_deep(stmt: Stmt, fn) -> Stmt:
    """Apply ``fn`` (via map_expr) to every expression in the subtree."""
    if isinstance(stmt, Block):
        return replace(stmt, stmts=tuple(map_exprs_deep(s, fn) for s in stmt.stmts))
    if isinstance(stmt, If):
        then = map_exprs_deep(stmt.then, fn)
        orelse = map_exprs_deep(stmt.orelse, fn) if stmt.orelse is not None else None
        return replace(stmt, cond=map_expr(stmt.cond, fn), then=then, orelse=orelse)
    if isinstance(stmt, For):
        init = map_expr(stmt.init, fn) if stmt.init is not None else None
        cond = map_expr(stmt.cond, fn) if stmt.cond is not None else None
        return replace(stmt, init=init, cond=cond, body=map_exprs_deep(stmt.body, fn))
    return map_stmt_exprs(stmt, fn)


def map_blocks(stmt: Stmt, fn) -> Stmt:
    """Rebuild the statement tree bottom-up, applying ``fn`` to every Block.

    ``fn`` receives a Block and returns a Block; structure below each
    block has already been rewritten when it is called.
    """
    if isinstance(stmt, Block):
        new = tuple(map_blocks(s, fn) for s in stmt.stmts)
        return fn(replace(stmt, stmts=new))
    if isinstance(stmt, If):
        then = map_blocks(stmt.then, fn)
        orelse = map_blocks(stmt.orelse, fn) if stmt.orelse is not None else None
        return replace(stmt, then=then, orelse=orelse)
    if isinstance(stmt, For):
        return replace(stmt, body=map_blocks(stmt.body, fn))
    return stmt


def number_kernel(kernel: KernelDef) -> KernelDef:
    """Assign stable preorder loop ids and load/store site numbers.

    Loads (rvalue Subscripts) and Stores share one site counter in
    program order; program order within an expression is C evaluation
    order, so an index load numbers before the load that consumes it.
    Numbering is idempotent: re-running after a rewrite renumbers the
    surviving nodes in their new program order.
    """
    counters = {"loop": 0, "site": 0}

    def num_expr(e: Expr) -> Expr:
        if isinstance(e, Unary):
            return replace(e, operand=num_expr(e.operand))
        if isinstance(e, Binary):
            return replace(e, left=num_expr(e.left), right=num_expr(e.right))
        if isinstance(e, Subscript):
            idx = num_expr(e.index)
            sid = counters["site"]
            counters["site"] += 1
            return replace(e, index=idx, site=sid)
        return e

    def num_opt(e):
        return num_expr(e) if e is not None else None

    def num_stmt(s: Stmt) -> Stmt:
        if isinstance(s, Block):
            return replace(s, stmts=tuple(num_stmt(c) for c in s.stmts))
        if isinstance(s, Decl):
            return replace(s, init=num_opt(s.init))
        if isinstance(s, Assign):
            return replace(s, value=num_expr(s.value))
        if isinstance(s, Store):
            idx = num_expr(s.index)
            val = num_expr(s.value)
            sid = counters["site"]
            counters["site"] += 1
            return replace(s, index=idx, value=val, site=sid)
        if isinstance(s, If):
            cond = num_expr(s.cond)
            then = num_stmt(s.then)
            orelse = num_stmt(s.orelse) if s.orelse is not None else None
            return replace(s, cond=cond, then=then, orelse=orelse)
        if isinstance(s, For):
            lid = counters["loop"]
            counters["loop"] += 1
            init = num_opt(s.init)
            cond = num_opt(s.cond)
            body = num_stmt(s.body)
            return replace(s, init=init, cond=cond, body=body, loop_id=lid)
        if isinstance(s, ChannelWrite):
            return replace(s, value=num_expr(s.value))
        return s

    return replace(kernel, body=num_stmt(kernel.body))


def kernel_loops(kernel: KernelDef) -> list:
    """All For nodes in preorder (matching loop_id order after numbering)."""
    return [s for s in walk_stmts(kernel.body) if isinstance(s, For)]


def strip_meta(node):
    """Copy of a node tree with spans/sites/loop ids cleared.

    Handy in tests for comparing printed forms; structural equality
    already ignores metadata so most code never needs this.
    """
    if isinstance(node, tuple):
        return tuple(strip_meta(n) for n in node)
    if not isinstance(node, (Expr, Stmt, Param, ChannelSpec, KernelDef, TranslationUnit)):
        return node
    kw = {}
    for f in fields(node):
        v = getattr(node, f.name)
        if f.name == "span":
            kw[f.name] = None
        elif f.name in ("site", "loop_id"):
            kw[f.name] = None
        elif isinstance(v, (Expr, Stmt, Param, ChannelSpec, KernelDef, TranslationUnit, tuple)):
            kw[f.name] = strip_meta(v)
        else:
            kw[f.name] = v
    return type(node)(**kw)
