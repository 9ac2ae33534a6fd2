"""Deterministic microbenchmark generator.

Produces single work-item kernels with an exact global-load count and an
exact arithmetic-op count (intensity x loads), in regular or irregular
flavors, optionally with a divergent inner for+if and an inner
reduction.  Kernels follow the M_AI<intensity>[_for_if][_red]_<R|IR>
naming convention and always pass single work-item validation.

Every choice (operators, constants, operand order) comes from a seeded
RNG, so one (spec, seed) pair always yields the same source.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import ast

REGULAR = "regular"
IRREGULAR = "irregular"

_ARITH_OPS = ("+", "-", "*", "/", "%")


@dataclass(frozen=True)
class BenchSpec:
    arithmetic_intensity: int
    loads: int
    pattern: str = REGULAR
    divergence: bool = False
    dlcd: bool = False

    def __post_init__(self):
        if self.loads < 1:
            raise ValueError("loads must be >= 1")
        if self.arithmetic_intensity < 0:
            raise ValueError("arithmetic_intensity must be >= 0")
        if self.pattern not in (REGULAR, IRREGULAR):
            raise ValueError(f"pattern must be {REGULAR!r} or {IRREGULAR!r}")


@dataclass(frozen=True)
class GeneratedBench:
    name: str
    source: str
    gen_params: dict = field(default_factory=dict)


def bench_name(spec: BenchSpec) -> str:
    parts = [f"M_AI{spec.arithmetic_intensity}"]
    if spec.divergence:
        parts.append("for_if")
    elif spec.dlcd:
        parts.append("red")
    parts.append("IR" if spec.pattern == IRREGULAR else "R")
    return "_".join(parts)


def count_arith_ops(kernel: ast.KernelDef) -> int:
    """Static count of arithmetic binary ops (compares excluded)."""
    n = 0
    for s in ast.walk_stmts(kernel.body):
        for e in ast.child_exprs(s):
            if e is None:
                continue
            for sub in ast.walk_exprs(e):
                if isinstance(sub, ast.Binary) and sub.op in _ARITH_OPS:
                    n += 1
    return n


def _float_lit(rng: random.Random) -> str:
    return f"{rng.uniform(0.25, 1.75):.3f}f"


def generate(spec: BenchSpec, seed: int = 0) -> GeneratedBench:
    """One microbenchmark kernel plus its input-generation parameters."""
    rng = random.Random(seed)
    name = bench_name(spec)
    irregular = spec.pattern == IRREGULAR

    params = []
    buffers = {}
    body = []
    values = []  # local names holding loaded data, in load order

    if irregular:
        params.append("__global int* restrict perm")
        buffers["perm"] = {"role": "perm", "len": "n"}
        body.append("    int j = perm[i];")
        data_loads = spec.loads - 1
        index = "j"
    else:
        data_loads = spec.loads
        index = "i"

    for k in range(data_loads):
        arr = f"in{k}"
        params.append(f"__global float* restrict {arr}")
        buffers[arr] = {"role": "data_float", "len": "n"}
        body.append(f"    float v{k} = {arr}[{index}];")
        values.append(f"v{k}")

    # one value drives the store even at intensity 0 (the copy kernel)
    base = values[0] if values else "j"
    out_type = "float" if values else "int"
    acc_type = out_type

    budget = spec.arithmetic_intensity * spec.loads
    reserve = (2 if spec.divergence else 0) + (2 if spec.dlcd else 0)
    if budget < reserve:
        raise ValueError(
            f"intensity {spec.arithmetic_intensity} x loads {spec.loads} leaves "
            f"no room for the requested divergence/reduction blocks "
            f"(needs at least {reserve} ops)")
    chain_ops = budget - reserve

    def operand(k: int) -> str:
        # visit every loaded value once before mixing in constants
        rest = values[1:]
        if k < len(rest):
            return rest[k]
        if acc_type == "float":
            return rng.choice(rest + [_float_lit(rng)]) if rest else _float_lit(rng)
        return str(rng.randint(1, 7))

    expr = base
    for k in range(chain_ops):
        op = rng.choice("+-*")
        expr = f"({expr} {op} {operand(k)})"
    body.append(f"    {acc_type} acc = {expr};")

    if spec.divergence:
        thr = _float_lit(rng) if acc_type == "float" else str(rng.randint(1, 5))
        alt = operand(len(values) + 17)
        body.append("    for (int dv = 0; dv < 2; dv++) {")
        body.append(f"      if (acc > {thr}) {{")
        body.append(f"        acc = acc - {thr};")
        body.append("      } else {")
        body.append(f"        acc = acc + {alt};")
        body.append("      }")
        body.append("    }")

    store_val = "acc"
    if spec.dlcd:
        seed_val = values[-1] if values else "j"
        step_val = operand(len(values) + 31)
        body.append(f"    {acc_type} racc = {seed_val};")
        body.append("    for (int rv = 0; rv < 3; rv++) {")
        body.append(f"      racc = racc + {step_val};")
        body.append("    }")
        store_val = "(acc + racc)"

    params.append(f"__global {out_type}* restrict out")
    buffers["out"] = {"role": "zero", "len": "n"}
    params.append("int n")
    body.append(f"    out[i] = {store_val};")

    lines = [f"__kernel void {name}("]
    for k, p in enumerate(params):
        sep = "," if k < len(params) - 1 else ") {"
        lines.append(f"    {p}{sep}")
    lines.append("  for (int i = 0; i < n; i++) {")
    lines.extend(body)
    lines.append("  }")
    lines.append("}")
    source = "\n".join(lines) + "\n"

    gen_params = {
        "kernel": name,
        "scalars": {"n": {"role": "size", "min": 8, "max": 64}},
        "buffers": buffers,
        "compare": ["out"],
    }
    return GeneratedBench(name=name, source=source, gen_params=gen_params)
