"""The feed-forward split: one kernel in, a memory/compute design out.

The transformation turns a single work-item kernel into

* a memory kernel that performs every global load and forwards each
  loaded value the computation needs through a blocking channel, and
* a compute kernel that reads those channels, does all arithmetic, and
  performs every global store,

connected by one channel per load equivalence class.  Loads used only
as addresses of other loads stay private to the memory kernel; loads
of the same address repeated in one iteration share a single channel;
an uninitialized declaration assigned on both branches of an if merges
into one channel written after the if.

Safety: the split reorders every load before every store it used to
follow, so it refuses kernels with a proven or unoverridden-assumed
MLCD, and also kernels where a store may feed a later load of the
same iteration (a hazard no loop carries but decoupling still breaks).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import ast, memdep
from .ast import (
    Assign, Block, ChannelRead, ChannelSpec, ChannelWrite, Decl, For, If,
    IntLit, KernelDef, Param, Store, Subscript, TranslationUnit, VarRef,
)
from .diagnostics import TransformError, UnsafeKernelError
from .emit import emit_expr
from .exprutil import fold_constants
from .validate import pointer_type_map, type_env

MEMORY_SUFFIX = "_mem"
COMPUTE_SUFFIX = "_cmp"


@dataclass
class FeedForwardDesign:
    """A transformed design: kernels, channels, and its launch manifest."""

    base_kernel: str
    unit: TranslationUnit
    manifest: dict
    channel_origins: dict = field(default_factory=dict)
    replicas: int = 1
    plan: object = None  # ReplicationPlan after replicate(), else None

    @property
    def kernels(self):
        return self.unit.kernels

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, indent=2) + "\n"


# --- hoisting -----------------------------------------------------------


def _global_params(kernel: KernelDef) -> set:
    return {p.name for p in kernel.params if p.space == "global"}


def _assigned_names(block: Block) -> set:
    out = set()
    for s in ast.walk_stmts(block):
        if isinstance(s, (Assign, Decl)):
            out.add(s.name)
        elif isinstance(s, ChannelRead) and s.name is not None:
            out.add(s.name)
        elif isinstance(s, For) and s.var is not None:
            out.add(s.var)
    return out


def _stored_arrays(block: Block) -> set:
    return {s.base for s in ast.walk_stmts(block) if isinstance(s, Store)}


def hoist_condition_loads(kernel: KernelDef) -> KernelDef:
    """Lift global loads out of if/for conditions into named locals.

    Loads materialize in C evaluation order immediately before the
    owning statement, so an index load lands before the load consuming
    it.  Identical loads within one condition share a local; separate
    conditions re-load (channel allocation dedups later).  An if
    condition always hoists.  A for condition hoists only when the
    load is loop-invariant (its index uses nothing the loop assigns
    and the body never stores the array); a varying bound load stays
    put and the split rejects the kernel rather than change what the
    loop observes.
    """
    globals_ = _global_params(kernel)
    ptr_types = pointer_type_map(kernel)
    taken = set(type_env(kernel))
    counters = {}

    def fresh(array: str) -> str:
        n = counters.get(array, 0)
        while True:
            name = f"{array}_h{n}"
            n += 1
            if name not in taken:
                counters[array] = n
                taken.add(name)
                return name

    def hoist_cond(cond, movable):
        """Returns (new_cond, [Decl...]) lifting loads that satisfy
        ``movable``; identical loads within the condition share a local."""
        decls = []
        seen = {}

        def lift(e):
            if isinstance(e, Subscript) and e.base in globals_ and movable(e):
                key = (e.base, ast.strip_meta(e.index))
                if key in seen:
                    return VarRef(seen[key])
                name = fresh(e.base)
                seen[key] = name
                decls.append(Decl(name=name, type=ptr_types[e.base], init=e))
                return VarRef(name)
            return e

        return ast.map_expr(cond, lift), decls

    def visit(block: Block) -> Block:
        out = []
        for s in block.stmts:
            out.extend(visit_one(s))
        return replace(block, stmts=tuple(out))

    def visit_one(s):
        if isinstance(s, If):
            cond, decls = hoist_cond(s.cond, lambda e: True)
            then = visit(s.then)
            orelse = visit(s.orelse) if s.orelse is not None else None
            return decls + [replace(s, cond=cond, then=then, orelse=orelse)]
        if isinstance(s, For):
            decls = []
            cond = s.cond
            if s.cond is not None:
                varying = _assigned_names(s.body)
                if s.var is not None:
                    varying.add(s.var)
                stored = _stored_arrays(s.body)

                def movable(e, varying=varying, stored=stored):
                    names = ast.expr_names(e.index)
                    return e.base not in stored and not (names & varying)

                cond, decls = hoist_cond(s.cond, movable)
            return decls + [replace(s, cond=cond, body=visit(s.body))]
        return [s]

    body = visit(kernel.body)
    return ast.number_kernel(replace(kernel, body=body))


# --- dead code elimination -----------------------------------------------


def dce(kernel: KernelDef) -> KernelDef:
    """Remove statements whose results reach no store, channel op, or
    live control flow.  Channel reads are effects (FIFO protocol) and
    survive even when their value is unused; the dead binding is
    dropped so no unused declaration remains.
    """

    def _mark(stmt, needed) -> bool:
        """Accumulate live names; True if the subtree keeps a statement."""
        if isinstance(stmt, Block):
            kept = False
            for s in stmt.stmts:
                kept |= _mark(s, needed)
            return kept
        if isinstance(stmt, If):
            kept = _mark(stmt.then, needed)
            if stmt.orelse is not None:
                kept |= _mark(stmt.orelse, needed)
            if kept:
                needed.update(ast.expr_names(stmt.cond))
            return kept
        if isinstance(stmt, For):
            kept = _mark(stmt.body, needed)
            if kept:
                if stmt.init is not None:
                    needed.update(ast.expr_names(stmt.init))
                if stmt.cond is not None:
                    needed.update(ast.expr_names(stmt.cond))
                if stmt.var:
                    needed.add(stmt.var)
            return kept
        if isinstance(stmt, Store):
            needed.update(ast.expr_names(stmt.index))
            needed.update(ast.expr_names(stmt.value))
            return True
        if isinstance(stmt, ChannelWrite):
            needed.update(ast.expr_names(stmt.value))
            return True
        if isinstance(stmt, ChannelRead):
            return True
        if isinstance(stmt, Decl):
            if stmt.name in needed and stmt.init is not None:
                needed.update(ast.expr_names(stmt.init))
            return stmt.name in needed
        if isinstance(stmt, Assign):
            if stmt.name in needed:
                needed.update(ast.expr_names(stmt.value))
            return stmt.name in needed
        return True

    def _sweep(stmt, needed):
        """Returns (stmt or None, kept)."""
        if isinstance(stmt, Block):
            out = []
            for s in stmt.stmts:
                new, keep = _sweep(s, needed)
                if keep and new is not None:
                    out.append(new)
            return replace(stmt, stmts=tuple(out)), bool(out)
        if isinstance(stmt, If):
            then, k1 = _sweep(stmt.then, needed)
            orelse, k2 = (None, False)
            if stmt.orelse is not None:
                orelse, k2 = _sweep(stmt.orelse, needed)
            if not k1 and not k2:
                return None, False
            if orelse is not None and not k2:
                orelse = None
            return replace(stmt, then=then, orelse=orelse), True
        if isinstance(stmt, For):
            body, kept = _sweep(stmt.body, needed)
            if not kept:
                return None, False
            return replace(stmt, body=body), True
        if isinstance(stmt, (Store, ChannelWrite)):
            return stmt, True
        if isinstance(stmt, ChannelRead):
            if stmt.name is not None and stmt.name not in needed:
                return replace(stmt, name=None, decl_type=None), True
            return stmt, True
        if isinstance(stmt, Decl):
            return (stmt, True) if stmt.name in needed else (None, False)
        if isinstance(stmt, Assign):
            return (stmt, True) if stmt.name in needed else (None, False)
        return stmt, True

    body = kernel.body
    while True:
        needed = set()
        while True:
            before = len(needed)
            _mark(body, needed)
            if len(needed) == before:
                break
        new_body, _ = _sweep(body, needed)
        if new_body == body:
            break
        body = new_body
    return ast.number_kernel(replace(kernel, body=body))


# --- load site collection -------------------------------------------------


@dataclass
class _LoadSite:
    node_site: int
    array: str
    index: ast.Expr
    norm_index: ast.Expr
    loops: tuple
    stmt_path: tuple  # path of the owning statement
    role: str  # "decl" | "assign" | "inline"
    owner_name: str = None  # decl/assign target when the load is the whole rhs


def _single_assignment_defs(kernel: KernelDef) -> dict:
    """name -> init expr for locals declared with an init and never
    reassigned (covers hoisted loads and address temporaries)."""
    inits, assigned = {}, set()
    for s in ast.walk_stmts(kernel.body):
        if isinstance(s, Decl) and s.init is not None:
            inits[s.name] = s.init
        elif isinstance(s, Assign):
            assigned.add(s.name)
        elif isinstance(s, ChannelRead) and s.name is not None:
            assigned.add(s.name)
        elif isinstance(s, For) and s.var is not None:
            assigned.add(s.var)
    return {k: v for k, v in inits.items() if k not in assigned}


def _normalizer(kernel: KernelDef):
    """Structural index comparison through single-assignment locals, so
    a hoisted address temporary equals the expression it names."""
    defs = _single_assignment_defs(kernel)
    memo = {}

    def norm(e):
        def repl(sub):
            if isinstance(sub, VarRef) and sub.name in defs:
                if sub.name not in memo:
                    memo[sub.name] = norm(defs[sub.name])
                return memo[sub.name]
            return sub

        return ast.strip_meta(ast.map_expr(e, repl))

    return norm


def _collect_sites(kernel: KernelDef):
    """Global-load sites with statement paths, plus (site, array) stores."""
    globals_ = _global_params(kernel)
    norm = _normalizer(kernel)
    loads, stores = [], []

    def expr_sites(e, loops, path, role, owner):
        if e is None:
            return
        for sub in ast.walk_exprs_postorder(e):
            if isinstance(sub, Subscript) and sub.base in globals_:
                site_role = role if sub is e else "inline"
                loads.append(
                    _LoadSite(
                        node_site=sub.site, array=sub.base, index=sub.index,
                        norm_index=norm(sub), loops=loops, stmt_path=path,
                        role=site_role,
                        owner_name=owner if site_role != "inline" else None,
                    )
                )

    def visit(stmt, loops, path):
        if isinstance(stmt, Block):
            for i, s in enumerate(stmt.stmts):
                visit(s, loops, path + (i,))
        elif isinstance(stmt, Decl):
            expr_sites(stmt.init, loops, path, "decl", stmt.name)
        elif isinstance(stmt, Assign):
            expr_sites(stmt.value, loops, path, "assign", stmt.name)
        elif isinstance(stmt, Store):
            expr_sites(stmt.index, loops, path, "inline", None)
            expr_sites(stmt.value, loops, path, "inline", None)
            stores.append((stmt.site, stmt.base))
        elif isinstance(stmt, If):
            expr_sites(stmt.cond, loops, path, "inline", None)
            visit(stmt.then, loops, path + ("t",))
            if stmt.orelse is not None:
                visit(stmt.orelse, loops, path + ("e",))
        elif isinstance(stmt, For):
            expr_sites(stmt.init, loops, path, "inline", None)
            expr_sites(stmt.cond, loops + (stmt.loop_id,), path, "inline", None)
            visit(stmt.body, loops + (stmt.loop_id,), path + ("b",))
        elif isinstance(stmt, ChannelWrite):
            expr_sites(stmt.value, loops, path, "inline", None)

    visit(kernel.body, (), ())
    return loads, stores


def _dominates(anchor: _LoadSite, site: _LoadSite) -> bool:
    """True when the anchor executes before ``site`` whenever ``site``
    runs, within one iteration of their shared loops.  In structured
    code that means the anchor's statement encloses and precedes the
    other site's position."""
    pa, pd = anchor.stmt_path, site.stmt_path
    if len(pa) > len(pd):
        return False
    if pa[:-1] != pd[: len(pa) - 1]:
        return False
    last_a, d_comp = pa[-1], pd[len(pa) - 1]
    if last_a < d_comp:
        return True
    if last_a == d_comp:
        return anchor.node_site < site.node_site
    return False


# --- merge patterns --------------------------------------------------------


@dataclass
class _Merge:
    var: str
    elem_type: str
    first_site: int  # earliest load site inside the branches
    branch_paths: set  # stmt paths of the two branch assignments


def _branch_single_assign(block: Block, var: str):
    if block is None or len(block.stmts) != 1:
        return None
    s = block.stmts[0]
    if isinstance(s, Assign) and s.name == var:
        return s
    return None


def _is_merge_if(s, var: str) -> bool:
    return (
        isinstance(s, If)
        and s.orelse is not None
        and _branch_single_assign(s.then, var) is not None
        and _branch_single_assign(s.orelse, var) is not None
    )


def _find_merges(kernel: KernelDef) -> list:
    """Decl-without-init immediately followed by an if/else assigning
    the variable on both paths, at least one load among the values."""
    globals_ = _global_params(kernel)
    merges = []

    def visit(stmt, path):
        if isinstance(stmt, Block):
            for i, s in enumerate(stmt.stmts):
                if (
                    isinstance(s, Decl)
                    and s.init is None
                    and i + 1 < len(stmt.stmts)
                    and _is_merge_if(stmt.stmts[i + 1], s.name)
                ):
                    nxt = stmt.stmts[i + 1]
                    sites = [
                        sub.site
                        for branch in (nxt.then, nxt.orelse)
                        for sub in ast.walk_exprs_postorder(branch.stmts[0].value)
                        if isinstance(sub, Subscript) and sub.base in globals_
                    ]
                    if sites:
                        merges.append(
                            _Merge(
                                var=s.name, elem_type=s.type,
                                first_site=min(sites),
                                branch_paths={
                                    path + (i + 1, "t", 0),
                                    path + (i + 1, "e", 0),
                                },
                            )
                        )
                visit(s, path + (i,))
        elif isinstance(stmt, If):
            visit(stmt.then, path + ("t",))
            if stmt.orelse is not None:
                visit(stmt.orelse, path + ("e",))
        elif isinstance(stmt, For):
            visit(stmt.body, path + ("b",))

    visit(kernel.body, ())
    return merges


# --- use classification -----------------------------------------------------


def _value_used_names(kernel: KernelDef) -> set:
    """Local names with at least one use outside a load index.

    A name appearing anywhere except inside the index of an rvalue
    subscript is value-used; store indices count as value uses because
    the compute kernel materializes store addresses itself.
    """
    out = set()

    def scan_expr(e, in_load_index: bool):
        if isinstance(e, VarRef):
            if not in_load_index:
                out.add(e.name)
        elif isinstance(e, Subscript):
            scan_expr(e.index, True)
        elif isinstance(e, ast.Unary):
            scan_expr(e.operand, in_load_index)
        elif isinstance(e, ast.Binary):
            scan_expr(e.left, in_load_index)
            scan_expr(e.right, in_load_index)

    for s in ast.walk_stmts(kernel.body):
        if isinstance(s, Decl) and s.init is not None:
            scan_expr(s.init, False)
        elif isinstance(s, Assign):
            scan_expr(s.value, False)
        elif isinstance(s, Store):
            scan_expr(s.index, False)
            scan_expr(s.value, False)
        elif isinstance(s, If):
            scan_expr(s.cond, False)
        elif isinstance(s, For):
            if s.init is not None:
                scan_expr(s.init, False)
            if s.cond is not None:
                scan_expr(s.cond, False)
        elif isinstance(s, ChannelWrite):
            scan_expr(s.value, False)

    return out


def _inline_address_sites(kernel: KernelDef) -> set:
    """Sites of global loads nested inside another rvalue's index."""
    globals_ = _global_params(kernel)
    out = set()
    for s in ast.walk_stmts(kernel.body):
        for e in ast.child_exprs(s):
            for sub in ast.walk_exprs(e):
                if isinstance(sub, Subscript):
                    for inner in ast.walk_exprs(sub.index):
                        if isinstance(inner, Subscript) and inner.base in globals_:
                            out.add(inner.site)
    return out


# --- the split -------------------------------------------------------------


@dataclass
class _Class:
    anchor: _LoadSite
    sites: list
    exempt: bool = False
    channel: str = None
    elem_type: str = None
    merge: _Merge = None

    @property
    def first_site(self) -> int:
        return self.merge.first_site if self.merge else self.anchor.node_site


def _cond_global_loads(kernel: KernelDef) -> list:
    globals_ = _global_params(kernel)
    found = []
    for s in ast.walk_stmts(kernel.body):
        conds = []
        if isinstance(s, If):
            conds.append(s.cond)
        elif isinstance(s, For) and s.cond is not None:
            conds.append(s.cond)
        for c in conds:
            for sub in ast.walk_exprs(c):
                if isinstance(sub, Subscript) and sub.base in globals_:
                    found.append(sub)
    return found


def split_feedforward(kernel: KernelDef, verdict=None, depth: int = 1,
                      may_alias: bool = False) -> FeedForwardDesign:
    """Split one hoisted kernel into a feed-forward design.

    ``verdict`` is the safety result for this kernel (computed with no
    overrides when omitted); an unsafe verdict or an intra-iteration
    store-to-load hazard raises UnsafeKernelError.  A kernel with no
    live global load degenerates to itself, with no channels.
    """
    leftover = _cond_global_loads(kernel)
    if leftover:
        names = ", ".join(f"{e.base}[{emit_expr(e.index)}]" for e in leftover)
        raise TransformError(
            f"kernel {kernel.name!r} has global loads inside conditions ({names}); "
            f"hoist first; a loop bound load that varies with its own loop cannot "
            f"move and makes the kernel unsplittable"
        )
    if verdict is None:
        verdict = memdep.safety_verdict(memdep.detect_lcds(kernel, may_alias=may_alias))
    if not verdict.safe:
        raise UnsafeKernelError(
            f"kernel {kernel.name!r} cannot be split: "
            + "; ".join(e.describe() for e in verdict.blocking_edges),
            blocking_edges=verdict.blocking_edges,
        )
    hazards = memdep.intra_iteration_hazards(kernel, may_alias=may_alias)
    if hazards:
        listing = ", ".join(f"{s}->{l} ({v})" for s, l, v in hazards)
        raise UnsafeKernelError(
            f"kernel {kernel.name!r} cannot be split: a store may feed a later "
            f"load of the same iteration ({listing}); decoupling would reorder them"
        )

    kernel = ast.number_kernel(kernel)
    ptr_types = pointer_type_map(kernel)
    loads, stores = _collect_sites(kernel)
    merges = _find_merges(kernel)
    merge_paths = set().union(*(m.branch_paths for m in merges)) if merges else set()

    # equivalence classes over sites not consumed by a merge
    classes = []
    for site in loads:
        if site.stmt_path in merge_paths:
            continue
        joined = False
        for cls in classes:
            a = cls.anchor
            if a.array != site.array or a.loops != site.loops:
                continue
            if a.norm_index != site.norm_index:
                continue
            if not _dominates(a, site):
                continue
            involved = {site.array} | {
                sub.base
                for sub in ast.walk_exprs(site.norm_index)
                if isinstance(sub, Subscript)
            }
            lo, hi = a.node_site, site.node_site
            if any(lo < pos < hi and arr in involved for pos, arr in stores):
                continue
            cls.sites.append(site)
            joined = True
            break
        if not joined:
            classes.append(_Class(anchor=site, sites=[site]))

    # exemption: every site of the class is only ever a load address
    value_used = _value_used_names(kernel)
    address_sites = _inline_address_sites(kernel)
    for cls in classes:
        cls.elem_type = ptr_types[cls.anchor.array]
        exempt = True
        for s in cls.sites:
            if s.role == "inline":
                if s.node_site not in address_sites:
                    exempt = False
            elif s.owner_name in value_used:
                exempt = False
        cls.exempt = exempt

    for m in merges:
        classes.append(_Class(anchor=None, sites=[], merge=m, elem_type=m.elem_type))

    classes.sort(key=lambda c: c.first_site)
    channeled = [c for c in classes if c.merge is not None or not c.exempt]
    for i, cls in enumerate(channeled):
        cls.channel = f"ch{i}"

    base = kernel.name
    if not channeled:
        manifest = _manifest([kernel], [], {kernel.name: "compute"})
        return FeedForwardDesign(
            base_kernel=base,
            unit=TranslationUnit(kernels=(kernel,)),
            manifest=manifest,
        )

    prepared, anchor_vars = _materialize(kernel, channeled)
    mem = _build_memory(prepared, channeled, anchor_vars)
    cmp_ = _build_compute(prepared, channeled, anchor_vars)

    mem = _prune_params(replace(mem, name=base + MEMORY_SUFFIX))
    cmp_ = _prune_params(replace(cmp_, name=base + COMPUTE_SUFFIX))

    specs, origins = [], {}
    for cls in channeled:
        origin = (
            f"merge of {cls.merge.var!r}"
            if cls.merge is not None
            else f"{cls.anchor.array}[{emit_expr(cls.anchor.index)}]"
        )
        origins[cls.channel] = origin
        specs.append(
            ChannelSpec(
                name=cls.channel, elem_type=cls.elem_type, min_depth=depth,
                writer=mem.name, reader=cmp_.name, origin=origin,
            )
        )

    _check_invariants(mem, cmp_)
    unit = TranslationUnit(channels=tuple(specs), kernels=(mem, cmp_))
    manifest = _manifest([mem, cmp_], specs, {mem.name: "memory", cmp_.name: "compute"})
    return FeedForwardDesign(
        base_kernel=base, unit=unit, manifest=manifest, channel_origins=origins
    )


def _materialize(kernel: KernelDef, channeled):
    """Give every channeled class a named local at its anchor.

    Anchors that are already the whole init of a declaration (or the
    whole rhs of an assignment) reuse that statement's name; inline
    anchors get a fresh declaration inserted before their owning
    statement.  The anchor load keeps its node site, so later passes
    find the anchor statement no matter how positions shifted.

    Returns (prepared kernel, {id(class) -> anchor local name}).
    """
    taken = set(type_env(kernel))
    counters = {}

    def fresh(array):
        n = counters.get(array, 0)
        while True:
            name = f"{array}_v{n}"
            n += 1
            if name not in taken:
                counters[array] = n
                taken.add(name)
                return name

    inserts = {}  # owning stmt path -> [Decl]
    substs = {}  # node site -> replacement VarRef
    anchor_vars = {}
    for cls in channeled:
        if cls.merge is not None:
            continue
        a = cls.anchor
        if a.role in ("decl", "assign"):
            anchor_vars[id(cls)] = a.owner_name
        else:
            name = fresh(a.array)
            anchor_vars[id(cls)] = name
            load = Subscript(base=a.array, index=a.index, site=a.node_site)
            decl = Decl(name=name, type=cls.elem_type, init=load)
            inserts.setdefault(a.stmt_path, []).append(decl)
            substs[a.node_site] = VarRef(name)

    def rewrite(e):
        if e is None:
            return None

        def repl(sub):
            if isinstance(sub, Subscript) and sub.site in substs:
                return substs[sub.site]
            return sub

        return ast.map_expr(e, repl)

    def visit(stmt, path):
        if isinstance(stmt, Block):
            out = []
            for i, s in enumerate(stmt.stmts):
                p = path + (i,)
                out.extend(inserts.get(p, ()))
                out.append(visit(s, p))
            return replace(stmt, stmts=tuple(out))
        if isinstance(stmt, If):
            orelse = visit(stmt.orelse, path + ("e",)) if stmt.orelse is not None else None
            return replace(
                stmt, cond=rewrite(stmt.cond),
                then=visit(stmt.then, path + ("t",)), orelse=orelse,
            )
        if isinstance(stmt, For):
            return replace(
                stmt, init=rewrite(stmt.init), cond=rewrite(stmt.cond),
                body=visit(stmt.body, path + ("b",)),
            )
        return ast.map_stmt_exprs(stmt, rewrite)

    prepared = replace(kernel, body=visit(kernel.body, ()))
    return prepared, anchor_vars


def _anchor_stmt_matches(stmt, cls, anchor_vars) -> bool:
    """The statement holding this class's anchor load, found by the
    anchor's node site (stable across statement reshuffling)."""
    name = anchor_vars[id(cls)]
    if isinstance(stmt, Decl) and stmt.name == name and stmt.init is not None:
        exprs = ast.walk_exprs(stmt.init)
    elif isinstance(stmt, Assign) and stmt.name == name:
        exprs = ast.walk_exprs(stmt.value)
    else:
        return False
    target = cls.anchor.node_site
    return any(isinstance(e, Subscript) and e.site == target for e in exprs)


def _build_memory(prepared: KernelDef, channeled, anchor_vars) -> KernelDef:
    """Channel writes after anchors, stores removed, then DCE."""
    normal = [c for c in channeled if c.merge is None]
    merged = [c for c in channeled if c.merge is not None]

    def visit(stmt):
        if isinstance(stmt, Block):
            out = []
            for s in stmt.stmts:
                if isinstance(s, Store):
                    continue
                out.append(visit(s))
                for cls in normal:
                    if _anchor_stmt_matches(s, cls, anchor_vars):
                        out.append(
                            ChannelWrite(channel=cls.channel, value=VarRef(anchor_vars[id(cls)]))
                        )
                for cls in merged:
                    if _is_merge_if(s, cls.merge.var):
                        out.append(ChannelWrite(channel=cls.channel, value=VarRef(cls.merge.var)))
            return replace(stmt, stmts=tuple(out))
        if isinstance(stmt, If):
            orelse = visit(stmt.orelse) if stmt.orelse is not None else None
            return replace(stmt, then=visit(stmt.then), orelse=orelse)
        if isinstance(stmt, For):
            return replace(stmt, body=visit(stmt.body))
        return stmt

    return dce(replace(prepared, body=visit(prepared.body)))


def _build_compute(prepared: KernelDef, channeled, anchor_vars) -> KernelDef:
    """Anchors become channel reads, duplicate sites collapse onto the
    anchor local, merges fold into one read, exempt loads vanish."""
    globals_ = _global_params(prepared)
    merged = [c for c in channeled if c.merge is not None]
    normal = [c for c in channeled if c.merge is None]
    merge_vars = {c.merge.var for c in merged}

    substs = {}
    for cls in normal:
        name = anchor_vars[id(cls)]
        for s in cls.sites:
            if s is cls.anchor:
                continue
            substs[s.node_site] = VarRef(name)

    def rewrite(e):
        if e is None:
            return None

        def repl(sub):
            if isinstance(sub, Subscript) and sub.site in substs:
                return substs[sub.site]
            return sub

        return ast.map_expr(e, repl)

    def visit(stmt):
        if isinstance(stmt, Block):
            out = []
            for s in stmt.stmts:
                if isinstance(s, Decl) and s.init is None and s.name in merge_vars:
                    continue  # folded into the merge read's declaration
                if isinstance(s, If):
                    hit = next((c for c in merged if _is_merge_if(s, c.merge.var)), None)
                    if hit is not None:
                        out.append(
                            ChannelRead(
                                name=hit.merge.var, channel=hit.channel,
                                decl_type=hit.elem_type,
                            )
                        )
                        continue
                matched = next(
                    (c for c in normal if _anchor_stmt_matches(s, c, anchor_vars)), None
                )
                if matched is not None:
                    name = anchor_vars[id(matched)]
                    if isinstance(s, Decl):
                        out.append(
                            ChannelRead(name=name, channel=matched.channel, decl_type=s.type)
                        )
                    else:
                        out.append(ChannelRead(name=name, channel=matched.channel))
                    continue
                out.append(visit(s))
            return replace(stmt, stmts=tuple(out))
        if isinstance(stmt, If):
            orelse = visit(stmt.orelse) if stmt.orelse is not None else None
            return replace(stmt, cond=rewrite(stmt.cond), then=visit(stmt.then), orelse=orelse)
        if isinstance(stmt, For):
            return replace(
                stmt, init=rewrite(stmt.init), cond=rewrite(stmt.cond), body=visit(stmt.body)
            )
        return ast.map_stmt_exprs(stmt, rewrite)

    body = visit(prepared.body)

    # exempt loads: whatever still reads global memory only fed other
    # loads, and those reads were replaced above; drop the bindings.
    def drop_exempt(block: Block) -> Block:
        out = []
        for s in block.stmts:
            if isinstance(s, (Decl, Assign)):
                init = s.init if isinstance(s, Decl) else s.value
                if init is not None and any(
                    isinstance(e, Subscript) and e.base in globals_
                    for e in ast.walk_exprs(init)
                ):
                    continue
            out.append(s)
        return replace(block, stmts=tuple(out))

    kernel = dce(replace(prepared, body=ast.map_blocks(body, drop_exempt)))

    for s in ast.walk_stmts(kernel.body):
        for e in ast.child_exprs(s):
            for sub in ast.walk_exprs(e):
                if isinstance(sub, Subscript) and sub.base in globals_:
                    raise TransformError(
                        f"internal error: global load {sub.base}[{emit_expr(sub.index)}] "
                        f"survived into the compute kernel"
                    )
    return kernel


def _prune_params(kernel: KernelDef) -> KernelDef:
    used = set()
    for s in ast.walk_stmts(kernel.body):
        if isinstance(s, Store):
            used.add(s.base)
        for e in ast.child_exprs(s):
            for sub in ast.walk_exprs(e):
                if isinstance(sub, (ast.ParamRef, VarRef)):
                    used.add(sub.name)
                elif isinstance(sub, Subscript):
                    used.add(sub.base)
    params = tuple(p for p in kernel.params if p.name in used)
    return replace(kernel, params=params)


def _manifest(kernels, specs, roles: dict) -> dict:
    entries = []
    for k in kernels:
        role = roles.get(k.name, "compute")
        entries.append(
            {
                "name": k.name,
                "role": role,
                "queue": 0 if role == "memory" else 1,
                "args": [p.name for p in k.params],
            }
        )
    buffers = {}
    for k in kernels:
        for p in k.params:
            if p.is_pointer and p.name not in buffers:
                buffers[p.name] = {"name": p.name, "type": p.type, "len": f"{p.name}_len"}
    return {
        "kernels": entries,
        "channels": [
            {
                "name": c.name, "type": c.elem_type, "depth": c.min_depth,
                "writer": c.writer, "reader": c.reader,
            }
            for c in specs
        ],
        "buffers": list(buffers.values()),
    }


def _check_invariants(mem: KernelDef, cmp_: KernelDef):
    for s in ast.walk_stmts(mem.body):
        if isinstance(s, Store):
            raise TransformError("internal error: store left in the memory kernel")
        if isinstance(s, ChannelRead):
            raise TransformError("internal error: channel read in the memory kernel")
    for s in ast.walk_stmts(cmp_.body):
        if isinstance(s, ChannelWrite):
            raise TransformError("internal error: channel write in the compute kernel")


# --- MLCD resolution --------------------------------------------------------


def resolve_private_mlcd(kernel: KernelDef) -> KernelDef:
    """Rewrite distance-1 proven MLCDs into a scalar carried across
    iterations, removing the loop-carried memory dependence.

    Applies when, per (array, loop): the loop stores the array at
    exactly one site directly in its body, every in-loop load of the
    array sits textually before the store and is proven distance-1
    against it, and the loop is canonical.  Anything else is refused
    with an explanation rather than silently left unresolved.
    """
    kernel = ast.number_kernel(kernel)
    edges = [
        e for e in memdep.detect_lcds(kernel)
        if e.kind == "MLCD" and e.status == memdep.PROVEN
    ]
    if not edges:
        raise TransformError(f"kernel {kernel.name!r} has no proven MLCD to resolve")
    bad = [e for e in edges if e.distance != 1]
    if bad:
        raise TransformError(
            "only distance-1 dependences are resolvable with a private carry: "
            + "; ".join(e.describe() for e in bad)
        )

    records = {r.site: r for r in memdep.collect_accesses(kernel)}
    ptr_types = pointer_type_map(kernel)

    groups = {}
    for e in edges:
        groups.setdefault((e.array, e.loop), []).append(e)

    new_kernel = kernel
    for (array, loop_id), group in sorted(groups.items(), key=lambda kv: kv[0][1]):
        store_sites = {e.store_site for e in group}
        if len(store_sites) != 1:
            raise TransformError(f"{array!r} is stored at multiple sites in loop {loop_id}")
        store_rec = records[next(iter(store_sites))]
        load_sites = {e.load_site for e in group}
        load_recs = [records[s] for s in load_sites]
        extra = [
            r for r in records.values()
            if r.array == array and loop_id in r.loops
            and r.site not in store_sites and r.site not in load_sites
        ]
        if extra:
            names = ", ".join(sorted(r.site for r in extra))
            raise TransformError(
                f"{array!r} has other in-loop accesses ({names}); carry rewrite refused"
            )
        if any(r.order > store_rec.order for r in load_recs):
            raise TransformError(
                f"a load of {array!r} follows the store in program order; carry rewrite refused"
            )
        new_kernel = _apply_carry(new_kernel, array, loop_id, ptr_types[array])

    return ast.number_kernel(new_kernel)


def _apply_carry(kernel: KernelDef, array: str, loop_id: int, elem_type: str) -> KernelDef:
    taken = set(type_env(kernel))

    def fresh(base):
        name, n = base, 0
        while name in taken:
            name = f"{base}{n}"
            n += 1
        taken.add(name)
        return name

    carry = fresh(f"{array}_carry")
    next_v = fresh(f"{array}_next")

    def loads_of(block):
        for s in ast.walk_stmts(block):
            for e in ast.child_exprs(s):
                for sub in ast.walk_exprs(e):
                    if isinstance(sub, Subscript) and sub.base == array:
                        yield sub

    def carry_loop(loop: For):
        if loop.var is None or loop.init is None:
            raise TransformError(
                f"loop {loop_id} is not canonical; cannot carry {array!r} across iterations"
            )

        def at_entry(e):
            return fold_constants(ast.substitute(e, {loop.var: loop.init}))

        first_load = next(loads_of(loop.body), None)
        if first_load is None:
            raise TransformError(f"no load of {array!r} found in loop {loop_id}")
        preheader_init = at_entry(ast.strip_meta(first_load))

        def repl_load(e):
            if isinstance(e, Subscript) and e.base == array:
                return VarRef(carry)
            return e

        out, store_seen = [], False
        for s in loop.body.stmts:
            s = ast.map_exprs_deep(s, repl_load)
            if isinstance(s, Store) and s.base == array:
                if store_seen:
                    raise TransformError(f"multiple stores to {array!r} in loop {loop_id}")
                store_seen = True
                if isinstance(s.value, (VarRef, IntLit, ast.FloatLit)):
                    out.append(s)
                    out.append(Assign(name=carry, value=s.value))
                else:
                    out.append(Decl(name=next_v, type=elem_type, init=s.value))
                    out.append(replace(s, value=VarRef(next_v)))
                    out.append(Assign(name=carry, value=VarRef(next_v)))
            else:
                out.append(s)
        if not store_seen:
            raise TransformError(
                f"store to {array!r} is not directly inside loop {loop_id}; carry rewrite refused"
            )

        guard = If(
            cond=at_entry(loop.cond),
            then=Block(stmts=(Assign(name=carry, value=preheader_init),)),
        )
        return [
            Decl(name=carry, type=elem_type, init=None),
            guard,
            replace(loop, body=Block(stmts=tuple(out))),
        ]

    def visit(stmt):
        if isinstance(stmt, Block):
            out = []
            for s in stmt.stmts:
                if isinstance(s, For) and s.loop_id == loop_id:
                    out.extend(carry_loop(s))
                else:
                    out.append(visit(s))
            return replace(stmt, stmts=tuple(out))
        if isinstance(stmt, If):
            orelse = visit(stmt.orelse) if stmt.orelse is not None else None
            return replace(stmt, then=visit(stmt.then), orelse=orelse)
        if isinstance(stmt, For):
            return replace(stmt, body=visit(stmt.body))
        return stmt

    return replace(kernel, body=visit(kernel.body))


# --- NDRange serialization ----------------------------------------------


def serialize_ndrange(kernel: KernelDef, wg_param: str = "wg_count",
                      wi_param: str = "wi_count") -> KernelDef:
    """Wrap an NDRange kernel body in loops over work-groups and local
    ids, replacing dimension-0 work-item builtins with loop variables."""
    for s in ast.walk_stmts(kernel.body):
        for e in ast.child_exprs(s):
            for sub in ast.walk_exprs(e):
                if isinstance(sub, ast.BuiltinCall) and sub.dim != 0:
                    raise TransformError(
                        f"{sub.name}({sub.dim}): only dimension 0 can be serialized"
                    )

    taken = set(type_env(kernel))
    gvar = "wg" if "wg" not in taken else "wg_"
    lvar = "wi" if "wi" not in taken else "wi_"

    params = list(kernel.params)
    names = {p.name for p in params}
    if wg_param not in names:
        params.append(Param(name=wg_param, type="int", space="value"))
    if wi_param not in names:
        params.append(Param(name=wi_param, type="int", space="value"))

    def repl(e):
        if isinstance(e, ast.BuiltinCall):
            if e.name == "get_group_id":
                return VarRef(gvar)
            if e.name == "get_local_id":
                return VarRef(lvar)
            if e.name == "get_global_id":
                return ast.Binary(
                    "+",
                    ast.Binary("*", VarRef(gvar), ast.ParamRef(wi_param)),
                    VarRef(lvar),
                )
        return e

    body = ast.map_exprs_deep(kernel.body, repl)
    inner = For(
        var=lvar, var_type="int", init=IntLit(0),
        cond=ast.Binary("<", VarRef(lvar), ast.ParamRef(wi_param)),
        step=1, body=body,
    )
    outer = For(
        var=gvar, var_type="int", init=IntLit(0),
        cond=ast.Binary("<", VarRef(gvar), ast.ParamRef(wg_param)),
        step=1, body=Block(stmts=(inner,)),
    )
    return ast.number_kernel(
        replace(kernel, params=tuple(params), body=Block(stmts=(outer,)))
    )
