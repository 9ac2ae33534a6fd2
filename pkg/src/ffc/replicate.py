"""Symmetric design replication over contiguous chunks of the outer loop.

Replication instantiates the memory/compute pair k times.  Replica i
owns a contiguous chunk of the outer iteration range and a private
copy of every channel, so the channel graph stays k independent
memory-to-compute pipelines with no cross traffic.  Chunk sizes differ
by at most one, with earlier chunks taking the remainder; when the
trip count is a kernel argument the chunk bounds are emitted as
runtime-computed expressions over that argument.

Only symmetric MkCk layouts exist here.  Asymmetric variants (one
memory kernel feeding two compute kernels, or the reverse) force the
shared side to interleave requests from both chunks, which turns
regular access patterns into irregular ones at the LSU; evaluation of
those variants showed no benefit, so they are rejected outright.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from . import ast
from .ast import Binary, ChannelRead, ChannelSpec, ChannelWrite, For, IntLit, VarRef
from .diagnostics import TransformError
from .emit import emit_expr
from .exprutil import fold_constants
from .ffsplit import FeedForwardDesign, dce


@dataclass(frozen=True)
class ReplicationPlan:
    """How an outer iteration range is carved into per-replica chunks."""

    k: int
    axis: int  # loop id of the partitioned outer loop (memory kernel)
    chunks: tuple  # ((lo, hi), ...) when the trip count is concrete, else ()


def partition(n: int, k: int, lo: int = 0):
    """Split [lo, lo+n) into k contiguous ranges.

    Sizes differ by at most one and earlier chunks take the remainder,
    so k > n yields empty trailing chunks.
    """
    if k < 1:
        raise ValueError(f"replica count must be positive, got {k}")
    if n < 0:
        raise ValueError(f"range length must be non-negative, got {n}")
    q, r = divmod(n, k)
    out, cursor = [], lo
    for i in range(k):
        size = q + (1 if i < r else 0)
        out.append((cursor, cursor + size))
        cursor += size
    return out


def _min_with_remainder(i: int, rem):
    """Expression for min(i, rem) with i a compile-time chunk index and
    rem = n % k at runtime.  Comparisons evaluate to 0/1, so the general
    form is i + (rem - i) * (rem < i); the boundary cases collapse."""
    if i == 0:
        return IntLit(0)
    return Binary(
        "+",
        IntLit(i),
        Binary("*", Binary("-", rem, IntLit(i)), Binary("<", rem, IntLit(i))),
    )


def chunk_lo_expr(lb, n, k: int, i: int):
    """Lower bound of chunk i as an expression: lb + i*(n/k) + min(i, n%k)."""
    if i == 0:
        return lb
    q = Binary("/", n, IntLit(k))
    term = Binary("*", IntLit(i), q)
    if i >= k - 1:
        # min(k-1, n % k) is always n % k
        rem_term = Binary("%", n, IntLit(k))
    else:
        rem_term = _min_with_remainder(i, Binary("%", n, IntLit(k)))
    return fold_constants(Binary("+", Binary("+", lb, term), rem_term))


def _outer_loop(kernel):
    body = kernel.body.stmts
    if len(body) != 1 or not isinstance(body[0], For):
        raise TransformError(
            f"kernel {kernel.name!r} is not replicable: the body must be a single "
            f"outer loop (set-up code before the loop would be duplicated per replica)"
        )
    loop = body[0]
    if loop.var is None or loop.init is None or loop.step != 1:
        raise TransformError(
            f"kernel {kernel.name!r} is not replicable: the outer loop must be "
            f"canonical with unit step"
        )
    cond = loop.cond
    if not (
        isinstance(cond, Binary) and cond.op == "<"
        and isinstance(cond.left, VarRef) and cond.left.name == loop.var
    ):
        raise TransformError(
            f"kernel {kernel.name!r} is not replicable: the outer loop bound must "
            f"have the form {loop.var} < limit"
        )
    return loop


def _arg_only(expr, kernel):
    value_params = {p.name for p in kernel.params if p.space == "value"}
    return all(n in value_params for n in ast.expr_names(expr))


def replicate(design: FeedForwardDesign, k: int, k_compute: int = None) -> FeedForwardDesign:
    """Instantiate k memory and k compute replicas over contiguous chunks.

    k == 1 returns the design unchanged.  Each replica gets its own
    copies of every channel (``ch<N>_r<i>``) and an outer loop covering
    only its chunk; dead code elimination re-runs per replica.
    """
    if k_compute is not None and k_compute != k:
        raise TransformError(
            f"asymmetric replication (M{k}C{k_compute}) is not supported: a shared "
            f"side must interleave both chunks' requests, degrading regular access "
            f"patterns into irregular ones, and neither asymmetric variant proved "
            f"beneficial; use a symmetric M{k}C{k} layout"
        )
    if k < 1:
        raise TransformError(f"replica count must be positive, got {k}")
    if k == 1:
        return design
    kernels = design.unit.kernels
    if len(kernels) != 2 or not design.unit.channels:
        raise TransformError(
            f"design for {design.base_kernel!r} has no memory/compute pair to replicate"
        )

    mem, cmp_ = kernels
    mem_loop = _outer_loop(mem)
    cmp_loop = _outer_loop(cmp_)
    lb = ast.strip_meta(mem_loop.init)
    ub = ast.strip_meta(mem_loop.cond.right)
    if ast.strip_meta(cmp_loop.init) != lb or ast.strip_meta(cmp_loop.cond.right) != ub:
        raise TransformError(
            f"design for {design.base_kernel!r} is not replicable: memory and "
            f"compute outer loops cover different ranges"
        )
    for kern in (mem, cmp_):
        for e in (lb, ub):
            if not _arg_only(e, kern):
                raise TransformError(
                    f"outer loop bound {emit_expr(e)!r} of {kern.name!r} must be "
                    f"computable from kernel arguments alone"
                )

    n = fold_constants(Binary("-", ub, lb))
    bounds = [chunk_lo_expr(lb, n, k, i) for i in range(k)]
    chunks = ()
    if isinstance(lb, IntLit) and isinstance(ub, IntLit):
        chunks = tuple(partition(ub.value - lb.value, k, lo=lb.value))

    def rechannel(body, i):
        def per_block(block):
            out = []
            for s in block.stmts:
                if isinstance(s, (ChannelWrite, ChannelRead)):
                    s = replace(s, channel=f"{s.channel}_r{i}")
                out.append(s)
            return replace(block, stmts=tuple(out))

        return ast.map_blocks(body, per_block)

    def chunked(kernel, loop, i, new_name):
        init = bounds[i] if i > 0 else loop.init
        if i < k - 1:
            cond = Binary("<", VarRef(loop.var), bounds[i + 1])
        else:
            cond = loop.cond
        new_loop = replace(loop, init=init, cond=cond)
        body = rechannel(replace(kernel.body, stmts=(new_loop,)), i)
        return dce(replace(kernel, name=new_name, body=body))

    base = design.base_kernel
    mems = [chunked(mem, mem_loop, i, f"{base}_m{i}") for i in range(k)]
    cmps = [chunked(cmp_, cmp_loop, i, f"{base}_c{i}") for i in range(k)]

    specs, origins = [], {}
    for i in range(k):
        for spec in design.unit.channels:
            name = f"{spec.name}_r{i}"
            origin = design.channel_origins.get(spec.name, spec.origin)
            origin = f"{origin} (replica {i})" if origin else None
            origins[name] = origin
            specs.append(
                replace(
                    spec, name=name, writer=mems[i].name, reader=cmps[i].name,
                    origin=origin,
                )
            )

    unit = ast.TranslationUnit(channels=tuple(specs), kernels=tuple(mems + cmps))
    manifest = _replicated_manifest(design.manifest, mems, cmps, specs)
    plan = ReplicationPlan(k=k, axis=mem_loop.loop_id, chunks=chunks)
    return FeedForwardDesign(
        base_kernel=base, unit=unit, manifest=manifest,
        channel_origins=origins, replicas=k, plan=plan,
    )


def _replicated_manifest(old: dict, mems, cmps, specs) -> dict:
    entries = []
    for idx, kern in enumerate(list(mems) + list(cmps)):
        role = "memory" if kern in mems else "compute"
        entries.append(
            {
                "name": kern.name,
                "role": role,
                "queue": idx,
                "args": [p.name for p in kern.params],
            }
        )
    return {
        "kernels": entries,
        "channels": [
            {
                "name": c.name, "type": c.elem_type, "depth": c.min_depth,
                "writer": c.writer, "reader": c.reader,
            }
            for c in specs
        ],
        "buffers": list(old.get("buffers", ())),
    }
