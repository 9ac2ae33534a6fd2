"""Command-line surface: analyze, transform, simulate, estimate,
genbench, and corpus verbs over the library passes.

Exit codes: 0 success, 1 usage (bad flags, unbound estimate inputs),
2 parse or validation failure, 3 refused transform, 4 simulation
mismatch or deadlock.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import re
import sys
from pathlib import Path

from . import ast, chansim, corpus as corpus_mod, emit, ffsplit, genbench, memdep
from . import parser as frontend
from . import replicate as replicate_mod
from . import report as report_mod
from . import validate as validate_mod
from .costmodel import EstimateError, LatencyTable, estimate_design
from .diagnostics import FrontendError, OverrideError, TransformError, UnsafeKernelError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FRONTEND = 2
EXIT_REFUSED = 3
EXIT_MISMATCH = 4

LATENCY_TABLE_ENV = "FFC_LATENCY_TABLE"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this toolchain reserves 2 for
    frontend failures, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


_REPLICAS_RE = re.compile(r"^[Mm](\d+)[Cc](\d+)$")


def _replicas_arg(text: str) -> tuple:
    """Either a plain count k or an MkCk design name."""
    m = _REPLICAS_RE.match(text.strip())
    if m:
        return int(m.group(1)), int(m.group(2))
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a replica count or MkCk, got {text!r}")
    return k, k


def _trips_arg(text: str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise argparse.ArgumentTypeError(
                f"expected name=value trip bindings, got {part!r}")
        name, value = part.split("=", 1)
        try:
            out[name.strip()] = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"trip binding {part!r} is not an integer")
    return out


def _load_unit(path: str, mode: str):
    source = Path(path).read_text()
    unit = frontend.parse(source, filename=path)
    diags = validate_mod.validate(unit, mode=mode, filename=path)
    errors = [d for d in diags if d.severity == "error"]
    for d in diags:
        print(d, file=sys.stderr)
    if errors:
        raise FrontendError(errors)
    return unit


def _pick_kernel(unit, name):
    if name is None:
        if not unit.kernels:
            raise FrontendError([])
        return unit.kernels[0]
    k = unit.kernel(name)
    if k is None:
        print(f"error: no kernel named {name!r} in the input", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return k


def _prepare(kernel, args):
    """Shared front half of transform/estimate: optional NDRange
    serialization and carry resolution, then hoisting and the safety
    verdict under the user's overrides."""
    if getattr(args, "serialize_ndrange", False):
        kernel = ffsplit.serialize_ndrange(kernel)
    if getattr(args, "resolve_private_mlcd", False):
        kernel = ffsplit.resolve_private_mlcd(kernel)
    kernel = ffsplit.hoist_condition_loads(kernel)
    edges = memdep.detect_lcds(kernel, may_alias=getattr(args, "may_alias", False))
    verdict = memdep.safety_verdict(edges, tuple(args.assume_no_mlcd or ()))
    return kernel, edges, verdict


def _build_design(kernel, args):
    kernel, _, verdict = _prepare(kernel, args)
    if not verdict.safe:
        raise UnsafeKernelError(
            "transform refused; blocking edges: "
            + ", ".join(e.id for e in verdict.blocking_edges)
            + "  (" + "; ".join(e.describe() for e in verdict.blocking_edges) + ")",
            blocking_edges=verdict.blocking_edges,
        )
    design = ffsplit.split_feedforward(kernel, verdict=verdict, depth=args.depth)
    k_mem, k_cmp = args.replicas
    if (k_mem, k_cmp) != (1, 1):
        design = replicate_mod.replicate(design, k_mem, k_compute=k_cmp)
    return design


# --- verbs -----------------------------------------------------------------


def cmd_analyze(args) -> int:
    unit = _load_unit(args.file, "ndrange" if args.ndrange else "single")
    kernel = _pick_kernel(unit, args.kernel)
    records = memdep.collect_accesses(kernel)
    edges = memdep.detect_lcds(kernel, may_alias=args.may_alias)
    verdict = memdep.safety_verdict(edges, tuple(args.assume_no_mlcd or ()))
    sys.stdout.write(report_mod.analyze_report(kernel, records, edges, verdict))
    return EXIT_OK


def cmd_transform(args) -> int:
    unit = _load_unit(args.file, "ndrange" if args.serialize_ndrange else "single")
    kernel = _pick_kernel(unit, args.kernel)
    design = _build_design(kernel, args)
    stem = Path(args.file).with_suffix("")
    out_path = Path(args.output) if args.output else Path(f"{stem}.design.cl")
    man_path = Path(args.manifest) if args.manifest else Path(f"{stem}.manifest.json")
    out_path.write_text(emit.emit(design.unit))
    man_path.write_text(design.manifest_json())
    chans = design.manifest.get("channels", [])
    print(f"wrote {out_path} ({len(design.kernels)} kernels) and {man_path} "
          f"({len(chans)} channels)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    base_unit = _load_unit(args.baseline, "single")
    baseline = _pick_kernel(base_unit, args.kernel)
    design_unit = _load_unit(args.design, "single")
    manifest = json.loads(Path(args.manifest).read_text())
    data = chansim.load_data(args.data)

    outcome, expected = chansim.run_single(baseline, data)
    if not outcome.completed:
        print(f"baseline: {outcome.status} {outcome.detail}".rstrip(), file=sys.stderr)
        return EXIT_MISMATCH
    status = EXIT_OK
    for depth in args.depths:
        outcome, actual = chansim.run_design(design_unit, manifest, data, depth=depth)
        if not outcome.completed:
            blocked = "; ".join(f"{k}:{op} on {ch}" for k, op, ch in outcome.blocked)
            print(f"depth={depth}: {outcome.status} {outcome.detail} {blocked}".rstrip())
            status = EXIT_MISMATCH
            continue
        result = chansim.diff(expected, actual)
        if result.equivalent:
            print(f"depth={depth}: equivalent ({outcome.steps} steps)")
        else:
            print(f"depth={depth}: MISMATCH")
            for r in result.reasons:
                print(f"  {r}")
            status = EXIT_MISMATCH
    if args.save_output and args.depths:
        chansim.save_data(args.save_output, actual, stats=outcome.channel_stats)
    return status


def _latency_table(args) -> LatencyTable:
    path = args.latency_table or os.environ.get(LATENCY_TABLE_ENV)
    return LatencyTable.from_file(path) if path else LatencyTable.default()


def cmd_estimate(args) -> int:
    unit = _load_unit(args.file, "single")
    kernel = _pick_kernel(unit, args.kernel)
    design = _build_design(kernel, args)
    table = _latency_table(args)
    trips = {}
    for binding in args.trips or ():
        trips.update(binding)
    cost = estimate_design(kernel, design, table, trips)
    sys.stdout.write(report_mod.estimate_text(cost))
    if args.report_dir:
        paths = report_mod.render_estimate_figures(cost, args.report_dir)
        tsv = Path(args.report_dir) / "estimate.tsv"
        tsv.write_text(report_mod.estimate_tsv(cost))
        for p in list(paths) + [tsv]:
            print(f"wrote {p}")
    return EXIT_OK


def cmd_genbench(args) -> int:
    spec = genbench.BenchSpec(
        arithmetic_intensity=args.intensity,
        loads=args.loads,
        pattern=args.pattern,
        divergence=args.divergence,
        dlcd=args.dlcd,
    )
    bench = genbench.generate(spec, seed=args.seed)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    cl = outdir / f"{bench.name}.cl"
    sidecar = outdir / f"{bench.name}.gen.json"
    cl.write_text(bench.source)
    meta = dict(bench.gen_params)
    meta["genbench"] = {"spec": dataclasses.asdict(spec), "seed": args.seed}
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {cl} and {sidecar}")
    return EXIT_OK


def cmd_corpus(args) -> int:
    result = corpus_mod.run_corpus(
        dirpath=args.dir,
        depths=args.depths,
        replicas=args.replicas,
        seeds=args.seeds,
        fail_dir=args.fail_dir,
        names=set(args.only) if args.only else None,
    )
    sys.stdout.write(report_mod.corpus_text(result))
    if args.report_dir:
        paths = report_mod.render_corpus_figure(result, args.report_dir)
        tsv = Path(args.report_dir) / "corpus.tsv"
        tsv.write_text(report_mod.corpus_tsv(result))
        for p in list(paths) + [tsv]:
            print(f"wrote {p}")
    return EXIT_OK if result.ok else EXIT_MISMATCH


# --- argument wiring ---------------------------------------------------------


def _add_overrides(p):
    p.add_argument("--assume-no-mlcd", nargs="*", metavar="EDGE",
                   help="dependence edge ids to treat as false (user assertion)")


def build_parser() -> _Parser:
    p = _Parser(prog="ffc",
                description="feed-forward decoupling toolchain for "
                            "single work-item OpenCL-C kernels")
    sub = p.add_subparsers(dest="verb", required=True)

    a = sub.add_parser("analyze", help="list accesses, patterns, and dependences")
    a.add_argument("file")
    a.add_argument("--kernel")
    a.add_argument("--may-alias", action="store_true",
                   help="assume distinct pointers of one space may alias")
    a.add_argument("--ndrange", action="store_true",
                   help="accept NDRange builtins in the input")
    _add_overrides(a)
    a.set_defaults(fn=cmd_analyze)

    t = sub.add_parser("transform", help="split (and replicate) a kernel")
    t.add_argument("file")
    t.add_argument("--kernel")
    t.add_argument("-o", "--output", help="design source path (default <file>.design.cl)")
    t.add_argument("--manifest", help="manifest path (default <file>.manifest.json)")
    t.add_argument("--replicas", type=_replicas_arg, default=(1, 1), metavar="K|MkCk",
                   help="replica count (default 1: split only)")
    t.add_argument("--depth", type=int, default=1, help="channel depth in the manifest")
    t.add_argument("--resolve-private-mlcd", action="store_true",
                   help="rewrite proven distance-1 carries through memory to private carries")
    t.add_argument("--serialize-ndrange", action="store_true",
                   help="wrap an NDRange kernel in work-group/work-item loops first")
    t.add_argument("--may-alias", action="store_true")
    _add_overrides(t)
    t.set_defaults(fn=cmd_transform)

    s = sub.add_parser("simulate", help="differential run: baseline vs design")
    s.add_argument("baseline")
    s.add_argument("design")
    s.add_argument("--manifest", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--depths", type=_int_list, default=(1, 100, 1000))
    s.add_argument("--kernel", help="baseline kernel name")
    s.add_argument("--save-output", help="write the final design buffers here")
    s.set_defaults(fn=cmd_simulate)

    e = sub.add_parser("estimate", help="cost-model a kernel and its design")
    e.add_argument("file")
    e.add_argument("--kernel")
    e.add_argument("--replicas", type=_replicas_arg, default=(1, 1), metavar="K|MkCk")
    e.add_argument("--depth", type=int, default=1)
    e.add_argument("--trips", type=_trips_arg, action="append", metavar="N=V,...",
                   help="scalar and loop<id> trip bindings")
    e.add_argument("--latency-table",
                   help=f"JSON latency overrides (default ${LATENCY_TABLE_ENV})")
    e.add_argument("--report-dir", help="also render figures and TSV here")
    e.add_argument("--resolve-private-mlcd", action="store_true")
    e.add_argument("--may-alias", action="store_true")
    _add_overrides(e)
    e.set_defaults(fn=cmd_estimate)

    g = sub.add_parser("genbench", help="generate a microbenchmark kernel")
    g.add_argument("--intensity", type=int, required=True,
                   help="arithmetic ops per load")
    g.add_argument("--loads", type=int, required=True)
    g.add_argument("--pattern", choices=(genbench.REGULAR, genbench.IRREGULAR),
                   default=genbench.REGULAR)
    g.add_argument("--divergence", action="store_true")
    g.add_argument("--dlcd", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out-dir", default=".")
    g.set_defaults(fn=cmd_genbench)

    c = sub.add_parser("corpus", help="differential-test a fixture directory")
    c.add_argument("dir", nargs="?", default=None,
                   help="fixture directory (default: the packaged corpus)")
    c.add_argument("--depths", type=_int_list, default=(1, 100, 1000))
    c.add_argument("--replicas", type=_int_list, default=(1, 2, 4))
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--only", type=lambda s: s.split(","), metavar="NAME,...")
    c.add_argument("--fail-dir", default="ffc-corpus-failures")
    c.add_argument("--report-dir", help="also render figures and TSV here")
    c.set_defaults(fn=cmd_corpus)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FrontendError as e:
        for d in e.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_FRONTEND
    except UnsafeKernelError as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_REFUSED
    except TransformError as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_REFUSED
    except OverrideError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EstimateError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
        detail = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {detail}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
