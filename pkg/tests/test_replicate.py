"""Chunk partitioning and MkCk design replication."""

import pytest

from ffc import chansim, ffsplit, replicate
from ffc.diagnostics import TransformError

from conftest import load, parse_one


def test_partition_basic_shapes():
    assert replicate.partition(10, 2) == [(0, 5), (5, 10)]
    assert replicate.partition(7, 3) == [(0, 3), (3, 5), (5, 7)]
    assert replicate.partition(3, 8)[:3] == [(0, 1), (1, 2), (2, 3)]
    assert replicate.partition(0, 4) == [(0, 0)] * 4
    assert replicate.partition(5, 1) == [(0, 5)]


def test_partition_offset():
    chunks = replicate.partition(10, 3, lo=100)
    assert chunks[0][0] == 100 and chunks[-1][1] == 110


@pytest.mark.parametrize("n", [0, 1, 2, 15, 16, 17, 999, 1000])
@pytest.mark.parametrize("k", [1, 2, 3, 7, 16])
def test_partition_properties(n, k):
    chunks = replicate.partition(n, k)
    assert len(chunks) == k
    # covering and contiguous
    assert chunks[0][0] == 0 and chunks[-1][1] == n
    for (a, b), (c, d) in zip(chunks, chunks[1:]):
        assert b == c  # contiguous, hence disjoint half-open ranges
        assert a <= b and c <= d
    # balanced within one element
    sizes = [b - a for a, b in chunks]
    assert max(sizes) - min(sizes) <= 1


def _design(src):
    k = ffsplit.hoist_condition_loads(parse_one(src))
    return ffsplit.split_feedforward(k)


SRC = (
    "__kernel void axpy(__global float* restrict y,"
    "                   __global float* restrict x, float a, int n) {"
    "  for (int i = 0; i < n; i++) {"
    "    float xv = x[i];"
    "    float yv = y[i];"
    "    y[i] = a * xv + yv;"
    "  }"
    "}")


@pytest.mark.parametrize("k", [1, 2, 3, 4, 8])
def test_replicate_kernel_and_channel_counts(k):
    design = _design(SRC)
    rep = replicate.replicate(design, k)
    mems = [kn for kn in rep.kernels if kn.name.endswith(tuple(
        f"_m{i}" for i in range(k)))]
    cmps = [kn for kn in rep.kernels if kn.name.endswith(tuple(
        f"_c{i}" for i in range(k)))]
    if k == 1:
        assert len(rep.kernels) == 2
    else:
        assert len(mems) == k and len(cmps) == k
    base_channels = len(design.manifest["channels"])
    assert len(rep.manifest["channels"]) == base_channels * k


@pytest.mark.parametrize("k", [2, 3, 5])
def test_replica_channels_pair_matching_replicas_only(k):
    rep = replicate.replicate(_design(SRC), k)
    for ch in rep.manifest["channels"]:
        suffix_w = ch["writer"].rsplit("_m", 1)[1]
        suffix_r = ch["reader"].rsplit("_c", 1)[1]
        assert suffix_w == suffix_r


@pytest.mark.parametrize("k", [2, 4])
def test_replicated_design_is_equivalent(k):
    design = _design(SRC)
    rep = replicate.replicate(design, k)
    n = 23  # not divisible by k: exercises the remainder chunk
    inputs = {"scalars": {"a": 1.5, "n": n},
              "buffers": {"x": {"type": "float", "data": [float(i) for i in range(n)]},
                          "y": {"type": "float", "data": [1.0] * n}}}
    _, expected = chansim.run_single(parse_one(SRC), inputs)
    outcome, actual = chansim.run_design(rep.unit, rep.manifest, inputs)
    assert outcome.completed, outcome.detail
    assert chansim.diff(expected, actual).equivalent


def test_replicate_refuses_asymmetric_layouts():
    design = _design(SRC)
    with pytest.raises(TransformError, match="asymmetric"):
        replicate.replicate(design, 3, k_compute=2)


def test_replicate_requires_positive_count():
    design = _design(SRC)
    with pytest.raises((TransformError, ValueError)):
        replicate.replicate(design, 0)


def test_replicate_refuses_carried_chunk_boundaries(fixtures_dir):
    # a resolved first-order carry runs left to right; chunking it would
    # break values at every chunk seam
    fx = load(fixtures_dir, "chain_accum")
    resolved = ffsplit.resolve_private_mlcd(fx.kernel)
    design = ffsplit.split_feedforward(ffsplit.hoist_condition_loads(resolved))
    with pytest.raises(TransformError):
        replicate.replicate(design, 2)
