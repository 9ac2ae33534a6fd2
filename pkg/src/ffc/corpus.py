"""Fixture corpus loading, input generation, and differential testing.

A fixture is a ``.cl`` kernel plus a ``.gen.json`` sidecar describing
how to fabricate inputs for it (sizes, value roles, and any dependence
overrides the kernel's author vouches for).  The runner takes each
fixture through analyze -> transform -> replicate and simulates the
design against the untransformed kernel over a depth x replica x seed
matrix, demanding bit-exact buffer equality everywhere.

On a failure the exact inputs and transformed sources are written out
and the case's reproducer field holds a ready-to-run command line.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from random import Random

from . import chansim, emit, ffsplit, memdep, parser, replicate, validate
from .diagnostics import FrontendError, TransformError

SIDECAR_SUFFIX = ".gen.json"


def fixtures_dir() -> Path:
    return Path(__file__).parent / "fixtures"


@dataclass(frozen=True)
class Fixture:
    name: str
    path: Path
    source: str
    unit: object
    kernel: object
    gen: dict


@dataclass
class CaseResult:
    name: str
    verdict: str  # pass | fail | skipped-unsafe
    depths: tuple = ()
    replicas: tuple = ()
    seeds: int = 0
    notes: list = field(default_factory=list)
    reproducer: str = None
    # (replicas, depth) -> digest over the compared buffers of every seed
    output_hashes: dict = field(default_factory=dict)


@dataclass
class CorpusResult:
    cases: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.verdict != "fail" for c in self.cases)


def list_fixtures(dirpath=None) -> list:
    root = Path(dirpath) if dirpath is not None else fixtures_dir()
    return sorted(p for p in root.glob("*.cl"))


def load_fixture(path) -> Fixture:
    path = Path(path)
    source = path.read_text()
    unit = parser.parse(source, filename=str(path))
    errors = [d for d in validate.validate(unit, mode="single", filename=str(path))
              if d.severity == "error"]
    if errors:
        raise FrontendError(errors)
    sidecar = path.with_name(path.stem + SIDECAR_SUFFIX)
    if not sidecar.exists():
        raise FileNotFoundError(
            f"{path.name}: fixture needs a {SIDECAR_SUFFIX} sidecar describing its inputs")
    gen = json.loads(sidecar.read_text())
    kname = gen.get("kernel")
    kernel = unit.kernels[0] if kname is None else unit.kernel(kname)
    if kernel is None:
        raise KeyError(f"{path.name}: sidecar names unknown kernel {kname!r}")
    return Fixture(name=path.stem, path=path, source=source,
                   unit=unit, kernel=kernel, gen=gen)


# --- input fabrication ----------------------------------------------------

_LEN_RE = re.compile(r"^\s*(\w+)\s*(?:([+*])\s*(\w+))?\s*$")


def _len_value(spec, scalars: dict) -> int:
    """Buffer length: an int, a scalar name, or `a + b` / `a * b` where
    each side is a scalar name or literal."""
    if isinstance(spec, int):
        return spec
    m = _LEN_RE.match(str(spec))
    if not m:
        raise ValueError(f"unsupported length expression {spec!r}")

    def term(t):
        return int(t) if t.isdigit() else int(scalars[t])

    n = term(m.group(1))
    if m.group(2) == "+":
        n += term(m.group(3))
    elif m.group(2) == "*":
        n *= term(m.group(3))
    return n


def make_inputs(kernel, gen: dict, seed: int) -> dict:
    """Fabricate one data file's worth of inputs per the sidecar roles.

    Scalar roles: size {min,max}, scalar_int {min,max,max_of},
    scalar_float {min,max}.  Buffer roles: data_float {min,max},
    data_int {min,max}, index {space}, perm, csr_row {nnz}, zero,
    fw_matrix {side}.
    """
    rng = Random(seed)
    scalars = {}
    spec_scalars = gen.get("scalars", {})
    # sizes first so later roles and lengths can reference them
    for name, spec in spec_scalars.items():
        if spec.get("role", "size") == "size":
            scalars[name] = rng.randint(spec.get("min", 4), spec.get("max", 32))
    for name, spec in spec_scalars.items():
        role = spec.get("role", "size")
        if role == "size":
            continue
        if role == "scalar_int":
            if "max_of" in spec:
                scalars[name] = rng.randrange(max(1, scalars[spec["max_of"]]))
            else:
                scalars[name] = rng.randint(spec.get("min", 0), spec.get("max", 100))
        elif role == "scalar_float":
            scalars[name] = round(rng.uniform(spec.get("min", -10.0), spec.get("max", 10.0)), 4)
        else:
            raise ValueError(f"scalar {name!r}: unknown role {role!r}")

    types = {p.name: p.type for p in kernel.params if p.is_pointer}
    buffers = {}
    for name, spec in gen.get("buffers", {}).items():
        n = _len_value(spec.get("len", 0), scalars)
        role = spec.get("role", "zero")
        if role == "zero":
            data = [0.0 if types.get(name) in ("float", "double") else 0] * n
        elif role == "data_float":
            lo, hi = spec.get("min", -10.0), spec.get("max", 10.0)
            data = [round(rng.uniform(lo, hi), 4) for _ in range(n)]
        elif role == "data_int":
            lo, hi = spec.get("min", 0), spec.get("max", 100)
            data = [rng.randint(lo, hi) for _ in range(n)]
        elif role == "perm":
            data = list(range(n))
            rng.shuffle(data)
        elif role == "index":
            space = _len_value(spec.get("space", n), scalars)
            data = [rng.randrange(max(1, space)) for _ in range(n)]
        elif role == "csr_row":
            nnz = _len_value(spec["nnz"], scalars)
            cuts = sorted(rng.randint(0, nnz) for _ in range(max(0, n - 2)))
            data = [0] + cuts + [nnz] if n >= 2 else [0] * n
        elif role == "fw_matrix":
            side = _len_value(spec["side"], scalars)
            data = [0.0 if r == c else round(rng.uniform(0.5, 10.0), 4)
                    for r in range(side) for c in range(side)]
        else:
            raise ValueError(f"buffer {name!r}: unknown role {role!r}")
        buffers[name] = {"type": types.get(name, "int"), "data": data}

    # declared lengths travel as <name>_len scalars for the manifest
    for name, buf in buffers.items():
        scalars.setdefault(f"{name}_len", len(buf["data"]))
    return {"scalars": scalars, "buffers": buffers}


# --- differential matrix ---------------------------------------------------


def _compared(outputs: dict, compare) -> dict:
    bufs = outputs.get("buffers", {})
    if compare:
        bufs = {n: bufs[n] for n in compare if n in bufs}
    return {"buffers": bufs}


def _digest(chunks: list) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(json.dumps(c, sort_keys=True).encode())
    return h.hexdigest()


def _persist_failure(fail_dir, fixture, design, inputs, tag) -> str:
    root = Path(fail_dir) / f"{fixture.name}-{tag}"
    root.mkdir(parents=True, exist_ok=True)
    (root / "baseline.cl").write_text(fixture.source)
    (root / "design.cl").write_text(emit.emit(design.unit))
    (root / "design.manifest.json").write_text(design.manifest_json())
    chansim.save_data(root / "data.json", inputs)
    return str(root)


def run_case(fixture: Fixture, depths=(1, 100, 1000), replicas=(1, 2, 4),
             seeds=5, fail_dir="ffc-corpus-failures") -> CaseResult:
    gen = fixture.gen
    result = CaseResult(name=fixture.name, verdict="pass",
                        depths=tuple(depths), seeds=seeds)

    kernel = fixture.kernel
    overrides = tuple(gen.get("overrides", ()))
    notes = result.notes
    if gen.get("resolve_private_mlcd"):
        kernel = ffsplit.resolve_private_mlcd(kernel)
        notes.append("resolved a private memory carry before splitting")
    kernel = ffsplit.hoist_condition_loads(kernel)
    edges = memdep.detect_lcds(kernel)
    verdict = memdep.safety_verdict(edges, overrides)
    if overrides:
        notes.append("overrides: " + ", ".join(overrides))
    if not verdict.safe:
        result.verdict = "skipped-unsafe"
        notes.extend(e.describe() for e in verdict.blocking_edges)
        return result

    try:
        base = ffsplit.split_feedforward(kernel, verdict=verdict)
    except TransformError as e:
        result.verdict = "fail"
        notes.append(str(e))
        return result
    max_k = gen.get("max_replicas")
    designs = {}
    for k in replicas:
        if max_k is not None and k > max_k:
            notes.append(f"replicas={k} skipped (fixture caps replication at {max_k})")
            continue
        try:
            designs[k] = replicate.replicate(base, k)
        except TransformError as e:
            result.verdict = "fail"
            notes.append(f"replicas={k}: {e}")
            return result
    result.replicas = tuple(sorted(designs))

    compare = gen.get("compare")
    inputs_by_seed = [make_inputs(fixture.kernel, gen, s) for s in range(seeds)]
    expected = []
    for s, inputs in enumerate(inputs_by_seed):
        outcome, outs = chansim.run_single(fixture.kernel, inputs)
        if not outcome.completed:
            result.verdict = "fail"
            notes.append(f"baseline seed {s}: {outcome.status} {outcome.detail}")
            return result
        expected.append(_compared(outs, compare))

    for k, design in sorted(designs.items()):
        for depth in depths:
            observed = []
            for s, inputs in enumerate(inputs_by_seed):
                outcome, outs = chansim.run_design(
                    design.unit, design.manifest, inputs, depth=depth)
                if not outcome.completed:
                    result.verdict = "fail"
                    where = _persist_failure(fail_dir, fixture, design, inputs,
                                             f"k{k}-d{depth}-s{s}")
                    notes.append(
                        f"replicas={k} depth={depth} seed={s}: {outcome.status} "
                        f"{outcome.detail}".rstrip())
                    result.reproducer = (
                        f"ffc simulate {where}/baseline.cl {where}/design.cl "
                        f"--manifest {where}/design.manifest.json "
                        f"--data {where}/data.json --depths {depth}")
                    return result
                got = _compared(outs, compare)
                report = chansim.diff(expected[s], got)
                if not report.equivalent:
                    result.verdict = "fail"
                    where = _persist_failure(fail_dir, fixture, design, inputs,
                                             f"k{k}-d{depth}-s{s}")
                    notes.append(
                        f"replicas={k} depth={depth} seed={s}: "
                        + "; ".join(report.reasons[:3]))
                    result.reproducer = (
                        f"ffc simulate {where}/baseline.cl {where}/design.cl "
                        f"--manifest {where}/design.manifest.json "
                        f"--data {where}/data.json --depths {depth}")
                    return result
                observed.append(got)
            result.output_hashes[(k, depth)] = _digest(observed)
    return result


def run_corpus(dirpath=None, depths=(1, 100, 1000), replicas=(1, 2, 4),
               seeds=5, fail_dir="ffc-corpus-failures", names=None) -> CorpusResult:
    out = CorpusResult()
    for path in list_fixtures(dirpath):
        if names and path.stem not in names:
            continue
        fixture = load_fixture(path)
        out.cases.append(run_case(fixture, depths, replicas, seeds, fail_dir))
    out.cases.sort(key=lambda c: c.name)
    return out
