"""Analytic performance model for single work-item designs.

Three layers, mirroring how an FPGA OpenCL compiler schedules a kernel:
per-access LSU selection, per-loop initiation intervals driven by
loop-carried dependences, and whole-design cycle totals comparing a
baseline kernel against its feed-forward split.

Every latency here is a model parameter, not a measurement.  Only the
orderings carry meaning (a global load costs far more than an ALU op; a
prefetching LSU beats a burst-coalesced one on a sequential stream), so
reports should be read as rankings, not predictions of wall-clock time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import ast
from .ast import (
    Assign, Binary, Block, ChannelRead, ChannelWrite, Decl, For, If,
    KernelDef, Store, Subscript, Unary,
)
from .exprutil import UnboundExpr, eval_const_expr
from .memdep import DISPROVEN, SEQUENTIAL, collect_accesses, detect_lcds
from .validate import infer_type, pointer_type_map, type_env

BURST_COALESCED = "BurstCoalesced"
PREFETCHING = "Prefetching"
PIPELINED = "Pipelined"
LSU_KINDS = (BURST_COALESCED, PREFETCHING, PIPELINED)

_COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")
_FLOAT_TYPES = ("float", "double")

# A carried scalar costs at least a feedback register and mux even when
# its update is a single integer op, so a dependence cycle never yields
# a fully pipelined loop.
_MIN_SERIAL_II = 2


class EstimateError(Exception):
    """The cost model lacks an input it needs (usually a trip count)."""


@dataclass(frozen=True)
class LatencyTable:
    """Per-operation cycle costs; all entries must be positive."""

    global_load: dict = field(
        default_factory=lambda: {BURST_COALESCED: 160, PREFETCHING: 40, PIPELINED: 4}
    )
    global_store: int = 80
    channel_op: int = 2
    alu_int: int = 1
    alu_float: int = 4
    compare: int = 1

    def __post_init__(self):
        for kind in LSU_KINDS:
            if self.global_load.get(kind, 0) <= 0:
                raise ValueError(f"global_load[{kind}] must be a positive integer")
        for name in ("global_store", "channel_op", "alu_int", "alu_float", "compare"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be a positive integer")

    def load_latency(self, kind: str) -> int:
        return self.global_load[kind]

    @staticmethod
    def default() -> "LatencyTable":
        return LatencyTable()

    @staticmethod
    def from_file(path: str) -> "LatencyTable":
        """Load overrides from a JSON file; missing keys keep defaults.

        Schema: {"global_load": {"BurstCoalesced": N, ...},
        "global_store": N, "channel_op": N, "alu_int": N,
        "alu_float": N, "compare": N}.
        """
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: expected a JSON object of latencies")
        base = LatencyTable()
        loads = dict(base.global_load)
        loads.update(raw.get("global_load", {}))
        kwargs = {"global_load": loads}
        for name in ("global_store", "channel_op", "alu_int", "alu_float", "compare"):
            if name in raw:
                kwargs[name] = raw[name]
        return replace(base, **kwargs)


@dataclass(frozen=True)
class LoopEstimate:
    loop_id: int
    ii: int
    pipelined: bool  # ii == 1
    trip: object = None  # int once bound; None while symbolic
    depth: object = None  # pipeline depth (cycles for one iteration)
    cycles: object = None  # depth + ii * (trip - 1), once trip is bound
    serialized_by: tuple = ()  # edge ids on the winning dependence cycle


@dataclass(frozen=True)
class AccessCost:
    site: str
    kind: str  # load | store
    array: str
    space: str
    pattern: str
    lsu: str


@dataclass(frozen=True)
class KernelCost:
    kernel: str
    cycles: int
    loops: tuple  # LoopEstimate, ordered by loop id
    accesses: tuple  # AccessCost, in program order


@dataclass(frozen=True)
class CostReport:
    baseline: KernelCost
    kernels: tuple  # KernelCost per design kernel
    design_cycles: int
    predicted_speedup: float


# --- LSU selection ------------------------------------------------------


def select_lsu(access) -> str:
    """Total map from (address space, access pattern) to an LSU kind."""
    if access.space in ("global", "constant"):
        if access.pattern.kind == SEQUENTIAL:
            return PREFETCHING
        return BURST_COALESCED
    return PIPELINED


# --- expression costs ---------------------------------------------------


class _CostCtx:
    """Shared lookups for one kernel: types, access records, table."""

    def __init__(self, kernel: KernelDef, table: LatencyTable):
        self.kernel = kernel
        self.table = table
        self.env = type_env(kernel)
        self.ptypes = pointer_type_map(kernel)
        self.records = collect_accesses(kernel)
        self.by_node_site = {
            r.node_site: r for r in self.records if r.node_site is not None
        }

    def alu(self, e) -> int:
        try:
            t = infer_type(e, self.env, self.ptypes)
        except TypeError:
            t = "int"
        return self.table.alu_float if t in _FLOAT_TYPES else self.table.alu_int

    def load(self, sub: Subscript) -> int:
        rec = self.by_node_site.get(sub.site)
        kind = select_lsu(rec) if rec is not None else BURST_COALESCED
        return self.table.load_latency(kind)


def _op_cost(e, ctx: _CostCtx) -> int:
    """ALU and compare cycles in an expression, loads excluded."""
    if e is None:
        return 0
    cost = 0
    for sub in ast.walk_exprs(e):
        if isinstance(sub, Binary):
            if sub.op in _COMPARE_OPS:
                cost += ctx.table.compare
            elif sub.op in ("&&", "||"):
                cost += ctx.table.alu_int
            else:
                cost += ctx.alu(sub)
        elif isinstance(sub, Unary):
            cost += ctx.table.alu_int if sub.op == "!" else ctx.alu(sub.operand)
    return cost


def _expr_cost(e, ctx: _CostCtx) -> int:
    """Ops plus the latency of every load the expression performs."""
    if e is None:
        return 0
    cost = _op_cost(e, ctx)
    for sub in ast.walk_exprs(e):
        if isinstance(sub, Subscript):
            cost += ctx.load(sub)
    return cost


# --- dependence-cycle latencies ------------------------------------------


def _scalar_defs(body: Block) -> dict:
    """name -> list of defining exprs in the region (None for channel reads)."""
    defs = {}
    for s in ast.walk_stmts(body):
        if isinstance(s, Decl) and s.init is not None:
            defs.setdefault(s.name, []).append(s.init)
        elif isinstance(s, Assign):
            defs.setdefault(s.name, []).append(s.value)
        elif isinstance(s, ChannelRead) and s.name is not None:
            defs.setdefault(s.name, []).append(None)
    return defs


def _contains_site(e, node_site) -> bool:
    return e is not None and any(
        isinstance(sub, Subscript) and sub.site == node_site
        for sub in ast.walk_exprs(e)
    )


def _mlcd_latency(loop: For, edge, ctx: _CostCtx) -> int:
    """Store -> later load on one array: the load waits on the prior
    store, so no LSU can run ahead; charge the burst-coalesced cost plus
    the ops between the loaded value and the stored one."""
    store_rec = next(
        (r for r in ctx.records if r.site == edge.store_site), None)
    load_rec = next(
        (r for r in ctx.records if r.site == edge.load_site), None)
    lat = ctx.table.load_latency(BURST_COALESCED) + ctx.table.global_store
    if store_rec is None or load_rec is None:
        return lat
    store_stmt = next(
        (s for s in ast.walk_stmts(loop.body)
         if isinstance(s, Store) and s.site == store_rec.node_site),
        None,
    )
    if store_stmt is None:
        return lat
    defs = _scalar_defs(loop.body)

    def derived(name, seen=frozenset()):
        if name in seen:
            return False
        for e in defs.get(name, []):
            if e is None:
                continue
            if _contains_site(e, load_rec.node_site):
                return True
            if any(derived(m, seen | {name}) for m in ast.expr_names(e)):
                return True
        return False

    ops = _op_cost(store_stmt.value, ctx)
    visited = set()
    stack = [m for m in ast.expr_names(store_stmt.value) if derived(m)]
    while stack:
        n = stack.pop()
        if n in visited:
            continue
        visited.add(n)
        for e in defs.get(n, []):
            if e is None or _contains_site(e, load_rec.node_site):
                continue  # the load endpoint itself is charged above
            ops += _op_cost(e, ctx)
            stack.extend(m for m in ast.expr_names(e) if derived(m))
    return lat + ops


def _dlcd_latency(loop: For, edge, ctx: _CostCtx) -> int:
    """Carried scalar: sum the update's backward slice within one
    iteration, including the loads and channel reads feeding it and the
    guards controlling it."""
    defs = {}  # name -> [(expr or None, guard cost)]

    def collect(stmt, guard_cost):
        if isinstance(stmt, Block):
            for c in stmt.stmts:
                collect(c, guard_cost)
        elif isinstance(stmt, If):
            g = guard_cost + _expr_cost(stmt.cond, ctx)
            collect(stmt.then, g)
            if stmt.orelse is not None:
                collect(stmt.orelse, g)
        elif isinstance(stmt, For):
            g = guard_cost + _expr_cost(stmt.cond, ctx)
            collect(stmt.body, g)
        elif isinstance(stmt, Decl) and stmt.init is not None:
            defs.setdefault(stmt.name, []).append((stmt.init, guard_cost))
        elif isinstance(stmt, Assign):
            defs.setdefault(stmt.name, []).append((stmt.value, guard_cost))
        elif isinstance(stmt, ChannelRead) and stmt.name is not None:
            defs.setdefault(stmt.name, []).append((None, guard_cost))

    collect(loop.body, 0)
    total = 0
    visited = set()
    stack = [edge.scalar]
    while stack:
        n = stack.pop()
        if n in visited:
            continue
        visited.add(n)
        for e, guard in defs.get(n, []):
            if n == edge.scalar:
                total += guard
            if e is None:
                total += ctx.table.channel_op
                continue
            total += _expr_cost(e, ctx)
            stack.extend(m for m in ast.expr_names(e) if m not in visited)
    return max(_MIN_SERIAL_II, total)


def estimate_ii(loop: For, edges, table: LatencyTable, overrides=(), kernel=None) -> LoopEstimate:
    """Initiation interval of one loop under the given dependence edges.

    Disproven and overridden edges are inactive.  With no active edge the
    loop pipelines at ii = 1; otherwise ii is the largest cycle latency,
    each cycle summed per its kind (store->load roundtrip for an MLCD,
    update slice for a DLCD).
    """
    ov = set(overrides)
    active = [
        e for e in edges
        if e.loop == loop.loop_id and e.status != DISPROVEN and e.id not in ov
    ]
    if not active:
        return LoopEstimate(loop_id=loop.loop_id, ii=1, pipelined=True)
    if kernel is None:
        raise EstimateError(
            "estimate_ii needs its kernel to price active dependence cycles")
    ctx = _CostCtx(kernel, table)
    ii = 1
    winners = []
    for e in active:
        lat = _mlcd_latency(loop, e, ctx) if e.kind == "MLCD" else _dlcd_latency(loop, e, ctx)
        lat = max(_MIN_SERIAL_II, lat)
        if lat > ii:
            ii, winners = lat, [e.id]
        elif lat == ii:
            winners.append(e.id)
    return LoopEstimate(
        loop_id=loop.loop_id, ii=ii, pipelined=False, serialized_by=tuple(winners))


# --- trip counts ---------------------------------------------------------

_FLIPPED = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}


def _loop_trip(loop: For, bindings: dict) -> int:
    if loop.loop_id is not None:
        explicit = bindings.get(f"loop{loop.loop_id}")
        if explicit is not None:
            return max(0, int(explicit))
    label = f"loop{loop.loop_id}"
    if loop.var is None or loop.init is None or loop.cond is None or not loop.step:
        raise EstimateError(
            f"{label}: trip count is not derivable from the loop header; "
            f"bind it explicitly (trips: {label}=N)")
    op = bound = None
    if isinstance(loop.cond, Binary):
        left, right = loop.cond.left, loop.cond.right
        if isinstance(left, (ast.VarRef, ast.ParamRef)) and left.name == loop.var:
            op, bound = loop.cond.op, right
        elif isinstance(right, (ast.VarRef, ast.ParamRef)) and right.name == loop.var:
            op, bound = _FLIPPED.get(loop.cond.op), left
    if op not in ("<", "<=", ">", ">="):
        raise EstimateError(
            f"{label}: condition is not a bound on {loop.var!r}; "
            f"bind the trip count explicitly ({label}=N)")
    try:
        lb = eval_const_expr(loop.init, bindings)
        ub = eval_const_expr(bound, bindings)
    except UnboundExpr as e:
        raise EstimateError(
            f"{label}: {e}; supply the value (or {label}=N) in the trip bindings")
    if op == "<":
        span = ub - lb
    elif op == "<=":
        span = ub - lb + 1
    elif op == ">":
        span = lb - ub
    else:
        span = lb - ub + 1
    step = abs(loop.step)
    return max(0, -(-span // step))


# --- kernel and design totals --------------------------------------------


def estimate_kernel(kernel: KernelDef, table: LatencyTable, trips: dict = None,
                    overrides=()) -> KernelCost:
    """Cycle estimate for one kernel with every loop's trip count bound.

    trips maps scalar argument names (and loop<N> labels for bounds the
    header cannot express) to integers.
    """
    trips = dict(trips or {})
    ctx = _CostCtx(kernel, table)
    edges = detect_lcds(kernel)
    loops = []

    def stmt_cost(s) -> int:
        if isinstance(s, Block):
            return sum(stmt_cost(c) for c in s.stmts)
        if isinstance(s, Decl):
            return _expr_cost(s.init, ctx)
        if isinstance(s, Assign):
            return _expr_cost(s.value, ctx)
        if isinstance(s, Store):
            return (_expr_cost(s.index, ctx) + _expr_cost(s.value, ctx)
                    + ctx.table.global_store)
        if isinstance(s, ChannelWrite):
            return _expr_cost(s.value, ctx) + ctx.table.channel_op
        if isinstance(s, ChannelRead):
            return ctx.table.channel_op
        if isinstance(s, If):
            inside = stmt_cost(s.then)
            if s.orelse is not None:
                inside = max(inside, stmt_cost(s.orelse))
            return _expr_cost(s.cond, ctx) + inside
        if isinstance(s, For):
            return loop_cost(s)
        return 0

    def loop_cost(s: For) -> int:
        est = estimate_ii(s, edges, table, overrides, kernel=kernel)
        trip = _loop_trip(s, trips)
        depth = (_expr_cost(s.init, ctx) + _expr_cost(s.cond, ctx)
                 + stmt_cost(s.body))
        cycles = depth + est.ii * (trip - 1) if trip > 0 else 0
        loops.append(replace(est, trip=trip, depth=depth, cycles=cycles))
        return cycles

    total = stmt_cost(kernel.body)
    accesses = tuple(
        AccessCost(site=r.site, kind=r.kind, array=r.array, space=r.space,
                   pattern=str(r.pattern), lsu=select_lsu(r))
        for r in ctx.records
    )
    loops.sort(key=lambda l: l.loop_id)
    return KernelCost(kernel=kernel.name, cycles=total,
                      loops=tuple(loops), accesses=accesses)


def estimate_design(baseline: KernelDef, design, table: LatencyTable = None,
                    trips: dict = None) -> CostReport:
    """Baseline-vs-design comparison under one latency table.

    The design's kernels run concurrently (memory/compute pairs overlap,
    replicas run side by side), so its cost is the slowest kernel's; the
    baseline runs alone.  Replica loop bounds are chunk expressions, so
    binding the same scalars automatically divides their trip counts.
    """
    table = table or LatencyTable.default()
    base_cost = estimate_kernel(baseline, table, trips)
    kernel_costs = tuple(
        estimate_kernel(k, table, trips) for k in design.kernels)
    design_cycles = max(k.cycles for k in kernel_costs)
    if design_cycles <= 0:
        speedup = 1.0
    else:
        speedup = base_cost.cycles / design_cycles if base_cost.cycles else 1.0
    return CostReport(
        baseline=base_cost,
        kernels=kernel_costs,
        design_cycles=design_cycles,
        predicted_speedup=speedup,
    )
