"""Hoisting, feed-forward splitting, DCE, NDRange serialization."""

import pytest

from ffc import ast, chansim, emit, ffsplit, memdep, parser
from ffc.diagnostics import TransformError, UnsafeKernelError

from conftest import load, parse_one


def global_loads(kernel):
    ptrs = {p.name for p in kernel.params if p.is_pointer}
    out = []
    for s in ast.walk_stmts(kernel.body):
        for e in ast.walk_exprs(s):
            if isinstance(e, ast.Subscript) and e.base in ptrs:
                out.append(e)
    return out


def global_stores(kernel):
    return [s for s in ast.walk_stmts(kernel.body) if isinstance(s, ast.Store)]


def channel_ops(kernel, cls):
    return [s for s in ast.walk_stmts(kernel.body) if isinstance(s, cls)]


# --- hoisting ---------------------------------------------------------------


def test_hoist_moves_if_condition_load():
    k = parse_one(
        "__kernel void k(__global int* flag, __global int* out, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    if (flag[i] > 0) { out[i] = 1; } else { out[i] = 0; }"
        "  }"
        "}")
    h = ffsplit.hoist_condition_loads(k)
    loop = h.body.stmts[0]
    cond_stmt = next(s for s in loop.body.stmts if isinstance(s, ast.If))
    assert not [e for e in ast.walk_exprs(cond_stmt.cond)
                if isinstance(e, ast.Subscript)]
    decls = [s for s in loop.body.stmts if isinstance(s, ast.Decl)]
    assert decls and any(
        isinstance(d.init, ast.Subscript) and d.init.base == "flag" for d in decls)


def test_hoist_preserves_semantics_and_is_idempotent():
    k = parse_one(
        "__kernel void k(__global int* flag, __global int* out, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    if (flag[i] % 3 == 0) { out[i] = flag[i] + 1; } else { out[i] = 7; }"
        "  }"
        "}")
    h = ffsplit.hoist_condition_loads(k)
    inputs = {"scalars": {"n": 9},
              "buffers": {"flag": {"type": "int", "data": [0, 1, 2, 3, 4, 5, 6, 7, 8]},
                          "out": {"type": "int", "data": [0] * 9}}}
    _, a = chansim.run_single(k, inputs)
    _, b = chansim.run_single(h, inputs)
    assert chansim.diff(a, b).equivalent
    assert emit.emit_kernel(ffsplit.hoist_condition_loads(h)) == emit.emit_kernel(h)


def test_hoist_outer_varying_for_bound():
    # b[i] is invariant in the j loop, so it can move out of the bound
    k = parse_one(
        "__kernel void k(__global int* b, __global int* out, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    int acc = 0;"
        "    for (int j = 0; j < b[i]; j++) { acc = acc + j; }"
        "    out[i] = acc;"
        "  }"
        "}")
    h = ffsplit.hoist_condition_loads(k)
    inner = [s for s in ast.walk_stmts(h.body) if isinstance(s, ast.For)][1]
    assert not [e for e in ast.walk_exprs(inner.cond) if isinstance(e, ast.Subscript)]
    inputs = {"scalars": {"n": 4},
              "buffers": {"b": {"type": "int", "data": [3, 0, 2, 5]},
                          "out": {"type": "int", "data": [0] * 4}}}
    _, a = chansim.run_single(k, inputs)
    _, b2 = chansim.run_single(h, inputs)
    assert chansim.diff(a, b2).equivalent


def test_split_requires_hoisted_input():
    k = parse_one(
        "__kernel void k(__global int* flag, __global int* out, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    if (flag[i] > 0) { out[i] = 1; }"
        "  }"
        "}")
    with pytest.raises(TransformError, match="hoist"):
        ffsplit.split_feedforward(k)


# --- splitting --------------------------------------------------------------


def split(src_or_kernel):
    k = parse_one(src_or_kernel) if isinstance(src_or_kernel, str) else src_or_kernel
    k = ffsplit.hoist_condition_loads(k)
    return k, ffsplit.split_feedforward(k)


def test_split_structure_and_equivalence():
    baseline, design = split(
        "__kernel void axpy(__global float* restrict y,"
        "                   __global float* restrict x, float a, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    float xv = x[i];"
        "    float yv = y[i];"
        "    y[i] = a * xv + yv;"
        "  }"
        "}")
    mem, cmp_ = design.kernels
    assert mem.name.endswith("_mem") and cmp_.name.endswith("_cmp")
    # memory side: loads and channel writes, no stores, no channel reads
    assert global_loads(mem) and channel_ops(mem, ast.ChannelWrite)
    assert not global_stores(mem) and not channel_ops(mem, ast.ChannelRead)
    # compute side: channel reads and stores, zero global loads
    assert global_stores(cmp_) and channel_ops(cmp_, ast.ChannelRead)
    assert not global_loads(cmp_) and not channel_ops(cmp_, ast.ChannelWrite)
    assert len(design.manifest["channels"]) == 2

    inputs = {"scalars": {"a": 0.5, "n": 8},
              "buffers": {"x": {"type": "float", "data": [float(i) for i in range(8)]},
                          "y": {"type": "float", "data": [1.0] * 8}}}
    _, expected = chansim.run_single(baseline, inputs)
    outcome, actual = chansim.run_design(design.unit, design.manifest, inputs)
    assert outcome.completed
    assert chansim.diff(expected, actual).equivalent


def test_split_dedups_identical_loads():
    _, design = split(
        "__kernel void k(__global float* restrict a, __global float* restrict o, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    float u = a[i] * 2.0f;"
        "    float v = a[i] + 1.0f;"
        "    o[i] = u + v;"
        "  }"
        "}")
    assert len(design.manifest["channels"]) == 1


def test_address_only_arrays_stay_in_memory_kernel(fixtures_dir):
    fx = load(fixtures_dir, "gather_scale")
    design = ffsplit.split_feedforward(ffsplit.hoist_condition_loads(fx.kernel))
    mem, cmp_ = design.kernels
    # idx[i] feeds only the address of x[idx[i]]: one channel, for x
    assert len(design.manifest["channels"]) == 1
    assert {e.base for e in global_loads(mem)} == {"x", "idx"}
    assert "idx" not in {p.name for p in cmp_.params}


def test_split_degenerates_without_live_loads():
    _, design = split(
        "__kernel void fill(__global int* restrict o, int n) {"
        "  for (int i = 0; i < n; i++) { o[i] = i * 2; }"
        "}")
    assert len(design.kernels) == 1
    assert design.manifest["channels"] == []


def test_split_depth_parameter_lands_in_manifest_and_source():
    k = parse_one(
        "__kernel void k(__global int* restrict a, __global int* restrict o, int n) {"
        "  for (int i = 0; i < n; i++) { int v = a[i]; o[i] = v; }"
        "}")
    design = ffsplit.split_feedforward(k, depth=5)
    assert all(c["depth"] == 5 for c in design.manifest["channels"])
    assert "depth(5)" in emit.emit(design.unit)


def test_split_refuses_proven_mlcd():
    k = parse_one(
        "__kernel void k(__global int* restrict a, __global int* restrict b, int n) {"
        "  for (int i = 1; i < n; i++) { int v = a[i - 1]; a[i] = v + b[i]; }"
        "}")
    with pytest.raises(UnsafeKernelError):
        ffsplit.split_feedforward(k)


def test_split_refuses_intra_iteration_hazard():
    k = parse_one(
        "__kernel void k(__global int* restrict a, __global int* restrict b, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    a[i] = b[i];"
        "    int w = a[i];"
        "    b[i] = w + 1;"
        "  }"
        "}")
    with pytest.raises(UnsafeKernelError, match="same iteration"):
        ffsplit.split_feedforward(k)


def test_split_honors_override_verdict(fixtures_dir):
    fx = load(fixtures_dir, "fw_phase")
    k = ffsplit.hoist_condition_loads(fx.kernel)
    edges = memdep.detect_lcds(k)
    with pytest.raises(UnsafeKernelError):
        ffsplit.split_feedforward(k)
    verdict = memdep.safety_verdict(edges, overrides=tuple(fx.gen["overrides"]))
    design = ffsplit.split_feedforward(k, verdict=verdict)
    assert len(design.kernels) == 2


# --- dead code elimination ----------------------------------------------------


def test_dce_removes_dead_chain_keeps_effects():
    k = parse_one(
        "__kernel void k(__global int* restrict a, __global int* restrict o, int n) {"
        "  for (int i = 0; i < n; i++) {"
        "    int dead1 = a[i] * 3;"
        "    int dead2 = dead1 + 4;"
        "    int live = a[i] + 1;"
        "    o[i] = live;"
        "  }"
        "}")
    d = ffsplit.dce(k)
    text = emit.emit_kernel(d)
    assert "dead1" not in text and "dead2" not in text
    assert "o[i] = live;" in text
    assert emit.emit_kernel(ffsplit.dce(d)) == emit.emit_kernel(d)


def test_dce_keeps_channel_writes():
    unit = parser.parse(
        "channel int c0 __attribute__((depth(1)));\n"
        "__kernel void w(__global int* x, int n) {"
        "  for (int i = 0; i < n; i++) { int v = x[i]; write_channel_intel(c0, v); }"
        "}", filename="t.cl")
    d = ffsplit.dce(unit.kernels[0])
    assert "write_channel_intel" in emit.emit_kernel(d)


# --- NDRange serialization ----------------------------------------------------


def test_serialize_ndrange_matches_grid_semantics():
    k = parse_one(
        "__kernel void scale(__global float* restrict o,"
        "                    __global float* restrict x) {"
        "  int gid = get_global_id(0);"
        "  o[gid] = x[gid] * 2.0f;"
        "}")
    s = ffsplit.serialize_ndrange(k)
    names = {p.name for p in s.params}
    assert {"wg_count", "wi_count"} <= names
    inputs = {"scalars": {"wg_count": 3, "wi_count": 4},
              "buffers": {"x": {"type": "float", "data": [float(i) for i in range(12)]},
                          "o": {"type": "float", "data": [0.0] * 12}}}
    outcome, outs = chansim.run_single(s, inputs)
    assert outcome.completed
    assert outs["buffers"]["o"]["data"] == [2.0 * i for i in range(12)]


def test_serialized_ndrange_is_single_mode_clean():
    from ffc import validate
    k = parse_one(
        "__kernel void scale(__global float* restrict o,"
        "                    __global float* restrict x) {"
        "  int gid = get_global_id(0);"
        "  o[gid] = x[gid] * 2.0f;"
        "}")
    s = ffsplit.serialize_ndrange(k)
    unit = ast.TranslationUnit(kernels=(s,), channels=())
    assert not [d for d in validate.validate(unit, mode="single", filename="s.cl")
                if d.severity == "error"]


# --- private-carry rewrite ------------------------------------------------------


def test_resolve_private_mlcd_unlocks_chain(fixtures_dir):
    fx = load(fixtures_dir, "chain_accum")
    edges = memdep.detect_lcds(ffsplit.hoist_condition_loads(fx.kernel))
    assert any(e.kind == "MLCD" and e.status == "proven_true" for e in edges)

    resolved = ffsplit.resolve_private_mlcd(fx.kernel)
    edges2 = memdep.detect_lcds(ffsplit.hoist_condition_loads(resolved))
    assert not any(e.kind == "MLCD" and e.status == "proven_true" for e in edges2)
    design = ffsplit.split_feedforward(ffsplit.hoist_condition_loads(resolved))
    assert len(design.kernels) == 2

    inputs = {"scalars": {"num": 16},
              "buffers": {"input": {"type": "int", "data": list(range(16))},
                          "output": {"type": "int", "data": [3] + [0] * 15}}}
    _, expected = chansim.run_single(fx.kernel, inputs)
    outcome, actual = chansim.run_design(design.unit, design.manifest, inputs)
    assert outcome.completed
    assert chansim.diff(expected, actual).equivalent
