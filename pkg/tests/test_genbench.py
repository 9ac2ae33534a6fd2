"""Microbenchmark generator: exact op budgets, determinism, validity."""

import pytest

from ffc import ast, chansim, corpus, ffsplit, genbench, memdep, parser, validate


def _kernel(bench):
    unit = parser.parse(bench.source, filename=bench.name + ".cl")
    return unit, unit.kernels[0]


def count_loads(kernel):
    ptrs = {p.name for p in kernel.params if p.is_pointer}
    n = 0
    for s in ast.walk_stmts(kernel.body):
        for e in ast.walk_exprs(s):
            if isinstance(e, ast.Subscript) and e.base in ptrs:
                n += 1
    return n


@pytest.mark.parametrize("ai", [1, 4, 10])
@pytest.mark.parametrize("loads", [2, 8])
@pytest.mark.parametrize("pattern", [genbench.REGULAR, genbench.IRREGULAR])
def test_exact_budgets(ai, loads, pattern):
    spec = genbench.BenchSpec(arithmetic_intensity=ai, loads=loads, pattern=pattern)
    bench = genbench.generate(spec, seed=3)
    _, k = _kernel(bench)
    assert genbench.count_arith_ops(k) == ai * loads
    assert count_loads(k) == loads


@pytest.mark.parametrize("divergence,dlcd", [(True, False), (False, True), (True, True)])
def test_budgets_with_structure_blocks(divergence, dlcd):
    spec = genbench.BenchSpec(arithmetic_intensity=5, loads=4,
                              divergence=divergence, dlcd=dlcd)
    bench = genbench.generate(spec, seed=1)
    _, k = _kernel(bench)
    assert genbench.count_arith_ops(k) == 20
    assert count_loads(k) == 4


def test_budget_below_reserve_is_refused():
    with pytest.raises(ValueError):
        genbench.generate(
            genbench.BenchSpec(arithmetic_intensity=1, loads=1,
                               divergence=True, dlcd=True), seed=0)


@pytest.mark.parametrize("bad", [
    dict(arithmetic_intensity=-1, loads=4),
    dict(arithmetic_intensity=4, loads=0),
    dict(arithmetic_intensity=4, loads=4, pattern="zigzag"),
])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        genbench.BenchSpec(**bad)


def test_deterministic_per_seed():
    spec = genbench.BenchSpec(arithmetic_intensity=6, loads=3)
    a = genbench.generate(spec, seed=42)
    b = genbench.generate(spec, seed=42)
    c = genbench.generate(spec, seed=43)
    assert a.source == b.source and a.gen_params == b.gen_params
    assert c.source != a.source


@pytest.mark.parametrize("spec,name", [
    (dict(arithmetic_intensity=10, loads=8), "M_AI10_R"),
    (dict(arithmetic_intensity=10, loads=8, pattern="irregular"), "M_AI10_IR"),
    (dict(arithmetic_intensity=6, loads=8, divergence=True), "M_AI6_for_if_R"),
    (dict(arithmetic_intensity=6, loads=8, divergence=True, dlcd=True),
     "M_AI6_for_if_R"),
    (dict(arithmetic_intensity=6, loads=8, dlcd=True), "M_AI6_red_R"),
])
def test_names_follow_convention(spec, name):
    assert genbench.bench_name(genbench.BenchSpec(**spec)) == name


def test_irregular_uses_permutation_index():
    bench = genbench.generate(
        genbench.BenchSpec(arithmetic_intensity=2, loads=3, pattern="irregular"),
        seed=5)
    _, k = _kernel(bench)
    records = memdep.collect_accesses(k)
    perm = [r for r in records if r.array == "perm"]
    assert len(perm) == 1 and perm[0].pattern.kind == "sequential"
    data_loads = [r for r in records if r.kind == "load" and r.array != "perm"]
    assert all(r.pattern.kind == "irregular" for r in data_loads)


def test_dlcd_block_produces_compute_side_carry():
    bench = genbench.generate(
        genbench.BenchSpec(arithmetic_intensity=4, loads=2, dlcd=True), seed=2)
    _, k = _kernel(bench)
    edges = memdep.detect_lcds(k)
    assert any(e.kind == "DLCD" for e in edges)
    design = ffsplit.split_feedforward(ffsplit.hoist_condition_loads(k))
    mem = next(kn for kn in design.kernels if kn.name.endswith("_mem"))
    assert not [e for e in memdep.detect_lcds(mem) if e.kind == "DLCD"]


@pytest.mark.parametrize("pattern", [genbench.REGULAR, genbench.IRREGULAR])
def test_generated_kernels_validate_and_run(pattern, tmp_path):
    spec = genbench.BenchSpec(arithmetic_intensity=3, loads=2, pattern=pattern)
    bench = genbench.generate(spec, seed=9)
    unit, k = _kernel(bench)
    assert not [d for d in validate.validate(unit, mode="single", filename="g.cl")
                if d.severity == "error"]

    inputs = corpus.make_inputs(k, bench.gen_params, seed=0)
    outcome, _ = chansim.run_single(k, inputs)
    assert outcome.completed

    design = ffsplit.split_feedforward(ffsplit.hoist_condition_loads(k))
    outcome2, actual = chansim.run_design(design.unit, design.manifest, inputs)
    assert outcome2.completed
    _, expected = chansim.run_single(k, inputs)
    assert chansim.diff(expected, actual).equivalent
