"""Interpreter semantics: scalar arithmetic, channels, scheduling, diff."""

import json
import math
import struct

import pytest

from ffc import chansim, parser

from conftest import parse_one


def _run(src, buffers, scalars=None, **kw):
    k = parse_one(src)
    outcome, outs = chansim.run_single(
        k, {"scalars": scalars or {}, "buffers": buffers}, **kw)
    return outcome, outs


def f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def test_int32_wraparound_and_c_division():
    outcome, outs = _run(
        "__kernel void k(__global int* out) {"
        "  int big = 2147483647;"
        "  out[0] = big + 1;"
        "  int q = -7;"
        "  out[1] = q / 2;"
        "  out[2] = q % 2;"
        "  out[3] = -2147483647 - 1;"
        "}",
        {"out": {"type": "int", "data": [0, 0, 0, 0]}})
    assert outcome.completed
    assert outs["buffers"]["out"]["data"] == [-2147483648, -3, -1, -2147483648]


def test_float_ops_round_to_f32():
    outcome, outs = _run(
        "__kernel void k(__global float* out, float a, float b) {"
        "  out[0] = a + b;"
        "  out[1] = a * b;"
        "}",
        {"out": {"type": "float", "data": [0.0, 0.0]}},
        scalars={"a": 0.1, "b": 0.2})
    data = outs["buffers"]["out"]["data"]
    assert data[0] == f32(f32(0.1) + f32(0.2))
    assert data[1] == f32(f32(0.1) * f32(0.2))


def test_control_flow_for_if_while():
    outcome, outs = _run(
        "__kernel void k(__global int* out, int n) {"
        "  int evens = 0;"
        "  for (int i = 0; i < n; i++) {"
        "    if (i % 2 == 0) { evens = evens + 1; }"
        "  }"
        "  int p = 1;"
        "  while (p < n) { p = p * 2; }"
        "  out[0] = evens;"
        "  out[1] = p;"
        "}",
        {"out": {"type": "int", "data": [0, 0]}},
        scalars={"n": 9})
    assert outs["buffers"]["out"]["data"] == [5, 16]


def test_out_of_bounds_traps():
    outcome, _ = _run(
        "__kernel void k(__global int* out, int n) { out[n] = 1; }",
        {"out": {"type": "int", "data": [0, 0]}},
        scalars={"n": 5})
    assert outcome.status == "trap"
    assert "out" in outcome.detail


def test_fuel_exhaustion_on_endless_loop():
    outcome, _ = _run(
        "__kernel void k(__global int* out) {"
        "  int i = 0;"
        "  while (i < 10) { out[0] = i; }"
        "}",
        {"out": {"type": "int", "data": [0]}},
        fuel=10_000)
    assert outcome.status == "fuel_exhausted"


DESIGN = """
channel int c0 __attribute__((depth(%d)));
__kernel void prod(__global int* restrict x, int n) {
    for (int i = 0; i < n; i++) {
        int v = x[i];
        write_channel_intel(c0, v + 1);
    }
}
__kernel void cons(__global int* restrict y, int n) {
    for (int i = 0; i < n; i++) {
        int v = read_channel_intel(c0);
        y[i] = v * 2;
    }
}
"""

MANIFEST = {
    "kernels": [
        {"name": "prod", "role": "memory", "queue": 0, "args": ["x", "n"]},
        {"name": "cons", "role": "compute", "queue": 1, "args": ["y", "n"]},
    ],
    "channels": [
        {"name": "c0", "type": "int", "depth": 1, "writer": "prod", "reader": "cons"},
    ],
    "buffers": [
        {"name": "x", "type": "int", "len": "n"},
        {"name": "y", "type": "int", "len": "n"},
    ],
}


@pytest.mark.parametrize("depth", [1, 2, 7])
def test_design_fifo_order_any_depth(depth):
    unit = parser.parse(DESIGN % depth, filename="d.cl")
    inputs = {"scalars": {"n": 6},
              "buffers": {"x": {"type": "int", "data": [3, 1, 4, 1, 5, 9]},
                          "y": {"type": "int", "data": [0] * 6}}}
    outcome, outs = chansim.run_design(unit, MANIFEST, inputs, depth=depth)
    assert outcome.completed, outcome.detail
    assert outs["buffers"]["y"]["data"] == [(v + 1) * 2 for v in [3, 1, 4, 1, 5, 9]]


def test_depth_override_argument_wins_over_manifest():
    # manifest says depth 1; forcing a larger runtime depth must not
    # change results, only scheduling
    unit = parser.parse(DESIGN % 1, filename="d.cl")
    inputs = {"scalars": {"n": 4},
              "buffers": {"x": {"type": "int", "data": [1, 2, 3, 4]},
                          "y": {"type": "int", "data": [0] * 4}}}
    base = chansim.run_design(unit, MANIFEST, inputs, depth=1)[1]
    wide = chansim.run_design(unit, MANIFEST, inputs, depth=1000)[1]
    assert chansim.diff(base, wide).equivalent


def test_blocking_write_blocks_until_read():
    # producer emits n values before the consumer reads any: with a
    # depth-1 channel the producer must stall, yet the run completes
    src = """
channel int c0 __attribute__((depth(1)));
__kernel void prod(__global int* restrict x, int n) {
    for (int i = 0; i < n; i++) { int v = x[i]; write_channel_intel(c0, v); }
}
__kernel void cons(__global int* restrict y, int n) {
    for (int i = 0; i < n; i++) { int v = read_channel_intel(c0); y[i] = v; }
}
"""
    unit = parser.parse(src, filename="d.cl")
    inputs = {"scalars": {"n": 64},
              "buffers": {"x": {"type": "int", "data": list(range(64))},
                          "y": {"type": "int", "data": [0] * 64}}}
    outcome, outs = chansim.run_design(unit, MANIFEST, inputs, depth=1)
    assert outcome.completed
    assert outs["buffers"]["y"]["data"] == list(range(64))
    stats = outcome.channel_stats["c0"]
    assert stats["writes"] == 64 and stats["reads"] == 64


def test_deadlock_reported_with_blocked_sites():
    src = """
channel int c0 __attribute__((depth(1)));
channel int c1 __attribute__((depth(1)));
__kernel void a(__global int* restrict x) {
    int v = read_channel_intel(c1);
    write_channel_intel(c0, v + x[0]);
}
__kernel void b(__global int* restrict y) {
    int v = read_channel_intel(c0);
    write_channel_intel(c1, v);
    y[0] = v;
}
"""
    unit = parser.parse(src, filename="dl.cl")
    manifest = {
        "kernels": [
            {"name": "a", "role": "memory", "queue": 0, "args": ["x"]},
            {"name": "b", "role": "compute", "queue": 1, "args": ["y"]},
        ],
        "channels": [
            {"name": "c0", "type": "int", "depth": 1, "writer": "a", "reader": "b"},
            {"name": "c1", "type": "int", "depth": 1, "writer": "b", "reader": "a"},
        ],
        "buffers": [
            {"name": "x", "type": "int", "len": "1"},
            {"name": "y", "type": "int", "len": "1"},
        ],
    }
    inputs = {"scalars": {},
              "buffers": {"x": {"type": "int", "data": [7]},
                          "y": {"type": "int", "data": [0]}}}
    outcome, _ = chansim.run_design(unit, manifest, inputs)
    assert outcome.status == "deadlock"
    blocked_channels = {ch for _, _, ch in outcome.blocked}
    assert blocked_channels  # both kernels stuck on reads


def test_scheduler_order_does_not_change_results():
    unit = parser.parse(DESIGN % 1, filename="d.cl")
    inputs = {"scalars": {"n": 16},
              "buffers": {"x": {"type": "int", "data": list(range(16))},
                          "y": {"type": "int", "data": [0] * 16}}}
    runs = [chansim.run_design(unit, MANIFEST, inputs, depth=1, order=o)[1]
            for o in (None, (0, 1), (1, 0))]
    assert chansim.diff(runs[0], runs[1]).equivalent
    assert chansim.diff(runs[0], runs[2]).equivalent


def test_diff_bit_exact_and_nan():
    a = {"scalars": {}, "buffers": {"v": {"type": "float", "data": [1.0, float("nan")]}}}
    b = {"scalars": {}, "buffers": {"v": {"type": "float", "data": [1.0, float("nan")]}}}
    assert chansim.diff(a, b).equivalent
    c = {"scalars": {}, "buffers": {"v": {"type": "float", "data": [1.0, 2.0]}}}
    rep = chansim.diff(a, c)
    assert not rep.equivalent and rep.reasons


def test_diff_distinguishes_signed_zero():
    a = {"scalars": {}, "buffers": {"v": {"type": "float", "data": [0.0]}}}
    b = {"scalars": {}, "buffers": {"v": {"type": "float", "data": [-0.0]}}}
    assert not chansim.diff(a, b).equivalent


def test_diff_ulps_tolerance():
    x = 1.0
    y = x + math.ulp(x)
    a = {"scalars": {}, "buffers": {"v": {"type": "float", "data": [x]}}}
    b = {"scalars": {}, "buffers": {"v": {"type": "float", "data": [y]}}}
    assert not chansim.diff(a, b).equivalent
    assert chansim.diff(a, b, ulps=2).equivalent


def test_data_file_round_trip(tmp_path):
    path = tmp_path / "d.json"
    data = {"scalars": {"n": 3},
            "buffers": {"x": {"type": "float", "data": [1.5, 2.5, 3.5]}}}
    chansim.save_data(str(path), data)
    loaded = chansim.load_data(str(path))
    assert loaded["scalars"] == {"n": 3}
    assert loaded["buffers"]["x"]["data"] == [1.5, 2.5, 3.5]
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"stuff": 1}))
        chansim.load_data(str(bad))


def test_load_data_rejects_recipe_and_nonnumeric_scalars(tmp_path):
    recipe = tmp_path / "k.gen.json"
    recipe.write_text(json.dumps(
        {"scalars": {"n": {"role": "size", "min": 4, "max": 32}},
         "buffers": {"a": {"role": "data_int", "len": "n", "min": 0, "max": 9}}}))
    with pytest.raises(ValueError, match="input recipe"):
        chansim.load_data(str(recipe))
    shallow = tmp_path / "shallow.json"
    shallow.write_text(json.dumps({"buffers": {"a": [1, 2, 3]}}))
    with pytest.raises(ValueError, match="'type' and 'data'"):
        chansim.load_data(str(shallow))
    badscalar = tmp_path / "s.json"
    badscalar.write_text(json.dumps(
        {"scalars": {"n": "ten"},
         "buffers": {"a": {"type": "int", "data": [1]}}}))
    with pytest.raises(ValueError, match="must be a number"):
        chansim.load_data(str(badscalar))


def test_trace_records_accesses_with_iterations():
    k = parse_one(
        "__kernel void k(__global int* a, __global int* out, int n) {"
        "  for (int i = 0; i < n; i++) { int v = a[i]; out[i] = v; }"
        "}")
    trace = chansim.TraceRecorder()
    outcome, _ = chansim.run_single(
        k, {"scalars": {"n": 3},
            "buffers": {"a": {"type": "int", "data": [5, 6, 7]},
                        "out": {"type": "int", "data": [0, 0, 0]}}},
        trace=trace)
    assert outcome.completed
    loads = [e for e in trace.events if e[1] == "load" and e[3] == "a"]
    assert [e[4] for e in loads] == [0, 1, 2]
    # each event carries the enclosing loop stack with completed iterations
    assert [dict(e[5])[0] for e in loads] == [0, 1, 2]
