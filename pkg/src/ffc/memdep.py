"""Loop-carried dependence analysis over the kernel subset.

Two dependence kinds drive everything downstream:

* MLCD: a global store whose value a load on the same array may observe
  in a *later* iteration of a shared loop.  Proven MLCDs make the
  feed-forward split unsound; assumed ones block it until the user
  overrides them.
* DLCD: a scalar updated in one iteration and read in a later one.
  DLCDs never block splitting (they move wholesale into the compute
  kernel) but they serialize loops in the cost model.

The affine machinery is deliberately small: zero- and single-index-
variable tests with integer coefficients.  Anything outside that
fragment stays "assumed", which is the conservative direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import ast
from .ast import (
    Assign, Block, ChannelRead, Decl, For, If, KernelDef, Store, Subscript,
)
from .diagnostics import OverrideError
from .exprutil import poly_sub, poly_of

SEQUENTIAL = "sequential"
STRIDED = "strided"
IRREGULAR = "irregular"

PROVEN = "proven_true"
ASSUMED = "assumed"
DISPROVEN = "disproven"


@dataclass(frozen=True)
class PatternClass:
    kind: str  # sequential | strided | irregular
    stride: Optional[int] = None  # set for strided; None when symbolic

    def __str__(self) -> str:
        if self.kind == STRIDED:
            return f"Strided({self.stride if self.stride is not None else '?'})"
        return self.kind.capitalize()


@dataclass(frozen=True)
class AccessRecord:
    site: str  # "ld<N>" / "st<N>", dense per kind in program order
    kind: str  # "load" | "store"
    space: str  # address space of the array param
    array: str
    index: ast.Expr
    pattern: PatternClass
    loops: tuple  # enclosing loop ids, outermost first
    loop_vars: tuple  # induction var names matching `loops` (None entries for while-form)
    order: int  # global program-order position among all accesses
    node_site: Optional[int] = None  # Subscript/Store site metadata, for trace correlation


@dataclass(frozen=True)
class DependenceEdge:
    id: str
    kind: str  # "MLCD" | "DLCD"
    loop: int  # loop id the dependence is carried by
    status: str  # proven_true | assumed | disproven
    distance: Optional[int] = None  # iterations, for proven_true
    array: Optional[str] = None
    store_site: Optional[str] = None
    load_site: Optional[str] = None
    scalar: Optional[str] = None
    note: str = ""

    def describe(self) -> str:
        if self.kind == "MLCD":
            what = f"{self.array}: {self.store_site} -> {self.load_site}"
        else:
            what = f"scalar {self.scalar}"
        d = f", d={self.distance}" if self.distance is not None else ""
        return f"{self.id} {self.kind} loop{self.loop} {self.status}{d} ({what})"


@dataclass
class SafetyVerdict:
    safe: bool
    blocking_edges: list = field(default_factory=list)
    overridden: list = field(default_factory=list)
    notes: list = field(default_factory=list)


# --- access collection ------------------------------------------------


def _tainted_scalars(kernel: KernelDef) -> set:
    """Scalars whose value transitively derives from a load (or channel).

    Induction variables are never tainted: they advance by a constant
    step, so indexing by one is still a regular access even when the
    loop bounds came from memory.
    """
    defs = {}

    def note(name, e):
        defs.setdefault(name, []).append(e)

    for s in ast.walk_stmts(kernel.body):
        if isinstance(s, Decl) and s.init is not None:
            note(s.name, s.init)
        elif isinstance(s, Assign):
            note(s.name, s.value)
        elif isinstance(s, ChannelRead) and s.name is not None:
            note(s.name, None)  # channel values count as loaded

    tainted = set()
    changed = True
    while changed:
        changed = False
        for name, exprs in defs.items():
            if name in tainted:
                continue
            for e in exprs:
                if e is None:
                    hit = True
                else:
                    hit = any(
                        isinstance(sub, Subscript) or (isinstance(sub, ast.VarRef) and sub.name in tainted)
                        for sub in ast.walk_exprs(e)
                    )
                if hit:
                    tainted.add(name)
                    changed = True
                    break
    return tainted


def _classify(index: ast.Expr, loop_vars: tuple, value_params: set, tainted: set) -> PatternClass:
    names = ast.expr_names(index)
    if any(isinstance(sub, Subscript) for sub in ast.walk_exprs(index)):
        return PatternClass(IRREGULAR)
    if names & tainted:
        return PatternClass(IRREGULAR)
    symbols = set(v for v in loop_vars if v) | value_params
    if names - symbols:
        # references a scalar we cannot see through
        return PatternClass(IRREGULAR)
    poly = poly_of(index, symbols)
    if poly is None:
        return PatternClass(IRREGULAR)
    innermost = loop_vars[-1] if loop_vars else None
    if innermost is None:
        return PatternClass(STRIDED, 0)
    stride = poly.get((innermost,), 0)
    symbolic = any(innermost in key and key != (innermost,) for key in poly)
    if symbolic:
        return PatternClass(STRIDED, None)
    if stride in (1, -1):
        return PatternClass(SEQUENTIAL, stride)
    return PatternClass(STRIDED, stride)


def collect_accesses(kernel: KernelDef) -> list:
    """One record per syntactic global/constant/local access site, in
    program order (C evaluation order within a statement)."""
    spaces = {p.name: p.space for p in kernel.params if p.is_pointer}
    value_params = {p.name for p in kernel.params if not p.is_pointer}
    tainted = _tainted_scalars(kernel)
    records = []
    counters = {"load": 0, "store": 0}

    def add(kind, base, index, loops, node_site):
        n = counters[kind]
        counters[kind] += 1
        prefix = "ld" if kind == "load" else "st"
        ids = tuple(l[0] for l in loops)
        vars_ = tuple(l[1] for l in loops)
        records.append(
            AccessRecord(
                site=f"{prefix}{n}",
                kind=kind,
                space=spaces.get(base, "global"),
                array=base,
                index=index,
                pattern=_classify(index, vars_, value_params, tainted),
                loops=ids,
                loop_vars=vars_,
                order=len(records),
                node_site=node_site,
            )
        )

    def expr_loads(e, loops):
        if e is None:
            return
        for sub in ast.walk_exprs_postorder(e):
            if isinstance(sub, Subscript):
                add("load", sub.base, sub.index, loops, sub.site)

    def visit(s, loops):
        if isinstance(s, Block):
            for c in s.stmts:
                visit(c, loops)
        elif isinstance(s, Decl):
            expr_loads(s.init, loops)
        elif isinstance(s, Assign):
            expr_loads(s.value, loops)
        elif isinstance(s, Store):
            expr_loads(s.index, loops)
            expr_loads(s.value, loops)
            add("store", s.base, s.index, loops, s.site)
        elif isinstance(s, If):
            expr_loads(s.cond, loops)
            visit(s.then, loops)
            if s.orelse is not None:
                visit(s.orelse, loops)
        elif isinstance(s, For):
            expr_loads(s.init, loops)
            inner = loops + [(s.loop_id, s.var)]
            expr_loads(s.cond, inner)
            visit(s.body, inner)
        elif isinstance(s, ast.ChannelWrite):
            expr_loads(s.value, loops)

    visit(kernel.body, [])
    return records


def classify_pattern(kernel: KernelDef, access: AccessRecord) -> PatternClass:
    """Recompute the pattern class of one record against its kernel."""
    value_params = {p.name for p in kernel.params if not p.is_pointer}
    return _classify(access.index, access.loop_vars, value_params, _tainted_scalars(kernel))


# --- MLCD detection ----------------------------------------------------


def _symbols_for(kernel: KernelDef) -> set:
    syms = {p.name for p in kernel.params if not p.is_pointer}
    for loop in ast.kernel_loops(kernel):
        if loop.var:
            syms.add(loop.var)
    return syms


def _single_var_test(store_poly, load_poly, var, varying: set):
    """Zero/single-index-variable dependence test w.r.t. one loop var.

    varying = names that change within one iteration of that loop
    (induction vars of loops nested inside it).  Returns (status,
    distance, note).
    """
    for poly, which in ((store_poly, "store"), (load_poly, "load")):
        for key in poly:
            if var in key and key != (var,):
                return ASSUMED, None, f"{which} index is not affine in {var}"
    a1 = store_poly.get((var,), 0)
    a2 = load_poly.get((var,), 0)
    diff = poly_sub(store_poly, load_poly)
    residue_vars = set()
    for key, coeff in diff.items():
        if key in ((), (var,)) or not coeff:
            continue
        residue_vars.update(key)
    if residue_vars & varying:
        return ASSUMED, None, f"index difference varies with {sorted(residue_vars & varying)}"
    if residue_vars:
        return ASSUMED, None, f"index difference depends on {sorted(residue_vars)}"
    if a1 != a2:
        return ASSUMED, None, f"coefficients of {var} differ ({a1} vs {a2})"
    c = diff.get((), 0)
    if a1 == 0:
        if c == 0:
            return PROVEN, 1, "same address every iteration"
        return DISPROVEN, None, "constant distinct addresses"
    if c % a1 != 0:
        return DISPROVEN, None, "address difference not a multiple of the stride"
    d = c // a1
    if d > 0:
        return PROVEN, d, f"store reaches the load {d} iteration(s) later"
    return DISPROVEN, None, "store never reaches a later iteration"


def _may_pair(store: AccessRecord, load: AccessRecord, may_alias: bool) -> Optional[str]:
    """None if the pair cannot interact; otherwise "" or an alias note."""
    if store.space == "constant" or load.space == "constant":
        return None
    if store.array == load.array:
        return ""
    if may_alias and store.space == load.space:
        return f"distinct pointers {store.array}/{load.array} may alias"
    return None


def detect_lcds(kernel: KernelDef, may_alias: bool = False) -> list:
    """All MLCD and DLCD edges with proven/assumed/disproven status.

    Edge ids are stable across hoisting: they follow program order of
    access sites (MLCDs) and loop/scalar order (DLCDs), neither of
    which condition-load hoisting changes.
    """
    records = collect_accesses(kernel)
    symbols = _symbols_for(kernel)
    loops = {l.loop_id: l for l in ast.kernel_loops(kernel)}
    edges = []

    stores = [r for r in records if r.kind == "store"]
    loads = [r for r in records if r.kind == "load"]
    n = 0
    for st in stores:
        for ld in loads:
            alias_note = _may_pair(st, ld, may_alias)
            if alias_note is None:
                continue
            common = []
            for (sl, sv), (ll, lv) in zip(zip(st.loops, st.loop_vars), zip(ld.loops, ld.loop_vars)):
                if sl != ll:
                    break
                common.append((sl, sv))
            if not common:
                continue
            st_poly = None if alias_note else poly_of(st.index, symbols)
            ld_poly = None if alias_note else poly_of(ld.index, symbols)
            for depth, (loop_id, var) in enumerate(common):
                if alias_note:
                    status, dist, note = ASSUMED, None, alias_note
                elif var is None:
                    status, dist, note = ASSUMED, None, "loop has no induction variable"
                elif st_poly is None or ld_poly is None:
                    status, dist, note = ASSUMED, None, "index is not affine"
                else:
                    varying = {
                        v
                        for v in st.loop_vars[depth + 1:] + ld.loop_vars[depth + 1:]
                        if v
                    }
                    status, dist, note = _single_var_test(st_poly, ld_poly, var, varying)
                edges.append(
                    DependenceEdge(
                        id=f"mlcd{n}",
                        kind="MLCD",
                        loop=loop_id,
                        status=status,
                        distance=dist,
                        array=st.array if not alias_note else f"{st.array}/{ld.array}",
                        store_site=st.site,
                        load_site=ld.site,
                        note=note,
                    )
                )
                n += 1

    edges.extend(_detect_dlcds(kernel))
    return edges


# --- DLCD detection ----------------------------------------------------


def _carried_scalars(body: Block, own_var: Optional[str]):
    """Scalars read before they are must-written within one iteration,
    and also written somewhere in the body; excludes names declared in
    the body itself and the loop's own induction variable."""
    declared = set()
    for s in ast.walk_stmts(body):
        if isinstance(s, Decl):
            declared.add(s.name)
        elif isinstance(s, ChannelRead) and s.decl_type is not None:
            declared.add(s.name)
        elif isinstance(s, For) and s.var and s.var_type:
            declared.add(s.var)

    may_read_first = []
    writes = set()

    def note_reads(e, written):
        if e is None:
            return
        for name in ast.expr_names(e):
            if name not in written and name not in may_read_first:
                may_read_first.append(name)

    def scan(stmt, written: set):
        """Returns the must-written set after the statement."""
        if isinstance(stmt, Block):
            for c in stmt.stmts:
                written = scan(c, written)
            return written
        if isinstance(stmt, If):
            note_reads(stmt.cond, written)
            w1 = scan(stmt.then, set(written))
            w2 = scan(stmt.orelse, set(written)) if stmt.orelse is not None else set(written)
            return w1 & w2
        if isinstance(stmt, For):
            # init runs exactly once, before the first condition read
            note_reads(stmt.init, written)
            after_init = set(written)
            if stmt.var:
                after_init.add(stmt.var)
                if not stmt.var_type:
                    writes.add(stmt.var)
            note_reads(stmt.cond, after_init)
            # the body may run zero times: its reads count, writes do not
            scan(stmt.body, after_init)
            own_write = {stmt.var} if stmt.var and not stmt.var_type else set()
            return written | own_write
        for e in ast.child_exprs(stmt):
            note_reads(e, written)
        if isinstance(stmt, Assign):
            writes.add(stmt.name)
            return written | {stmt.name}
        if isinstance(stmt, ChannelRead) and stmt.name is not None:
            if stmt.decl_type is None:
                writes.add(stmt.name)
            return written | {stmt.name}
        if isinstance(stmt, Decl):
            return written | {stmt.name}
        return written

    scan(body, set())
    out = []
    for name in may_read_first:
        if name in writes and name not in declared and name != own_var:
            out.append(name)
    return out


def _detect_dlcds(kernel: KernelDef) -> list:
    edges = []
    n = 0
    enclosing_inductions = set()

    def visit(stmt, inductions: set):
        nonlocal n
        if isinstance(stmt, Block):
            for c in stmt.stmts:
                visit(c, inductions)
        elif isinstance(stmt, If):
            visit(stmt.then, inductions)
            if stmt.orelse is not None:
                visit(stmt.orelse, inductions)
        elif isinstance(stmt, For):
            for name in _carried_scalars(stmt.body, stmt.var):
                if name in inductions:
                    continue  # enclosing induction vars cannot be reassigned
                edges.append(
                    DependenceEdge(
                        id=f"dlcd{n}",
                        kind="DLCD",
                        loop=stmt.loop_id,
                        status=PROVEN,
                        distance=1,
                        scalar=name,
                        note="scalar carried across the loop back-edge",
                    )
                )
                n += 1
            inner = inductions | ({stmt.var} if stmt.var else set())
            visit(stmt.body, inner)

    visit(kernel.body, enclosing_inductions)
    return edges


# --- intra-iteration hazards -------------------------------------------


def intra_iteration_hazards(kernel: KernelDef, may_alias: bool = False) -> list:
    """Store->later-load pairs on one array that may touch the same
    address within a single iteration (or straight-line execution).

    Decoupling loads into a separate kernel reorders them before every
    compute-side store, so any such pair makes the split unsound even
    though no loop *carries* the dependence.  Pairs are (store_site,
    load_site, verdict) with verdict "overlaps" or "may-overlap".
    """
    records = collect_accesses(kernel)
    symbols = _symbols_for(kernel)
    out = []
    for st in records:
        if st.kind != "store":
            continue
        for ld in records:
            if ld.kind != "load" or ld.order <= st.order:
                continue
            note = _may_pair(st, ld, may_alias)
            if note is None:
                continue
            if note:
                out.append((st.site, ld.site, "may-overlap"))
                continue
            sp = poly_of(st.index, symbols)
            lp = poly_of(ld.index, symbols)
            if sp is None or lp is None:
                out.append((st.site, ld.site, "may-overlap"))
                continue
            diff = poly_sub(sp, lp)
            if not diff:
                out.append((st.site, ld.site, "overlaps"))
            elif set(diff.keys()) == {()}:
                continue  # provably distinct at equal iteration vectors
            else:
                out.append((st.site, ld.site, "may-overlap"))
    return out


# --- verdict ------------------------------------------------------------


def safety_verdict(edges, overrides=()) -> SafetyVerdict:
    """Combine MLCD statuses with user overrides of assumed edges.

    Overrides may name only assumed MLCDs; naming a proven edge, a
    disproven edge, a DLCD, or an unknown id raises OverrideError.
    """
    by_id = {e.id: e for e in edges}
    overrides = list(overrides)
    for oid in overrides:
        e = by_id.get(oid)
        if e is None:
            raise OverrideError(f"unknown dependence edge {oid!r}")
        if e.kind == "DLCD":
            raise OverrideError(f"{oid} is a DLCD; DLCDs do not block splitting and cannot be overridden")
        if e.status == PROVEN:
            raise OverrideError(f"{oid} is a proven dependence; it cannot be assumed away")
        if e.status == DISPROVEN:
            raise OverrideError(f"{oid} is already disproven; overriding it has no meaning")
    overridden = set(overrides)
    blocking = [
        e for e in edges
        if e.kind == "MLCD"
        and (e.status == PROVEN or (e.status == ASSUMED and e.id not in overridden))
    ]
    verdict = SafetyVerdict(safe=not blocking, blocking_edges=blocking, overridden=sorted(overridden))
    if blocking:
        verdict.notes.append(
            "blocking edges: " + "; ".join(e.describe() for e in blocking)
        )
    return verdict
