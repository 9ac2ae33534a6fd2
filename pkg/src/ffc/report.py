"""Report rendering: analysis listings, cost estimates, corpus tables.

Each renderer returns plain text whose trailing section is
machine-readable (tab-delimited rows with a leading tag column), and
has a figure companion that draws the same numbers to PNG files for
humans who want the picture rather than the table.
"""

from __future__ import annotations

from pathlib import Path


def _tsv(*cells) -> str:
    return "\t".join(str(c) for c in cells)


# --- analyze ---------------------------------------------------------------


def analyze_report(kernel, records, edges, verdict) -> str:
    lines = [f"kernel {kernel.name}"]
    lines.append(f"accesses: {len(records)}")
    for r in records:
        from .emit import emit_expr
        loops = ",".join(str(l) for l in r.loops) or "-"
        lines.append(
            f"  {r.site:5s} {r.kind:5s} {r.array}[{emit_expr(r.index)}] "
            f"space={r.space} pattern={r.pattern} loops={loops}")
    lines.append(f"edges: {len(edges)}")
    for e in edges:
        lines.append(f"  {e.describe()}" + (f" -- {e.note}" if e.note else ""))
    lines.append(f"safe: {'yes' if verdict.safe else 'no'}")
    if verdict.overridden:
        lines.append("overridden: " + ", ".join(verdict.overridden))
    if not verdict.safe:
        lines.append("blocking: " + ", ".join(e.id for e in verdict.blocking_edges))
    mlcd = [e for e in edges if e.kind == "MLCD"]
    dlcd = [e for e in edges if e.kind == "DLCD"]
    by = {}
    for e in mlcd:
        by[e.status] = by.get(e.status, 0) + 1
    counts = ", ".join(f"{v} {k}" for k, v in sorted(by.items())) or "none"
    scalars = ", ".join(e.scalar for e in dlcd)
    lines.append(f"MLCD: {len(mlcd)} ({counts})")
    lines.append(f"DLCD: {len(dlcd)}" + (f" ({scalars})" if scalars else ""))
    return "\n".join(lines) + "\n"


# --- estimate --------------------------------------------------------------


def estimate_text(report) -> str:
    lines = ["cost estimate"]

    def kernel_block(kc, label):
        lines.append(f"{label} {kc.kernel}: {kc.cycles} cycles")
        for l in kc.loops:
            state = "pipelined" if l.pipelined else (
                "serialized by " + ",".join(l.serialized_by))
            lines.append(
                f"  loop{l.loop_id}: ii={l.ii} trip={l.trip} depth={l.depth} "
                f"cycles={l.cycles} ({state})")
        for a in kc.accesses:
            lines.append(f"  {a.site:5s} {a.kind:5s} {a.array} {a.pattern} -> {a.lsu}")

    kernel_block(report.baseline, "baseline")
    for kc in report.kernels:
        kernel_block(kc, "design")
    lines.append(f"design cycles: {report.design_cycles}")
    lines.append(f"predicted speedup: {report.predicted_speedup:.4f}")
    lines.append("")
    lines.append(estimate_tsv(report))
    return "\n".join(lines)


def estimate_tsv(report) -> str:
    rows = [_tsv("#loop", "kernel", "loop", "ii", "pipelined", "trip", "depth", "cycles")]
    for kc in (report.baseline,) + tuple(report.kernels):
        for l in kc.loops:
            rows.append(_tsv("loop", kc.kernel, l.loop_id, l.ii,
                             int(l.pipelined), l.trip, l.depth, l.cycles))
    rows.append(_tsv("#access", "kernel", "site", "kind", "array", "pattern", "lsu"))
    for kc in (report.baseline,) + tuple(report.kernels):
        for a in kc.accesses:
            rows.append(_tsv("access", kc.kernel, a.site, a.kind, a.array,
                             a.pattern, a.lsu))
    rows.append(_tsv("#total", "baseline_cycles", report.baseline.cycles))
    rows.append(_tsv("#total", "design_cycles", report.design_cycles))
    rows.append(_tsv("#total", "predicted_speedup", f"{report.predicted_speedup:.6f}"))
    return "\n".join(rows) + "\n"


def render_estimate_figures(report, outdir) -> list:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))

    kcs = [report.baseline] + list(report.kernels)
    names = [kc.kernel for kc in kcs]
    cycles = [kc.cycles for kc in kcs]
    colors = ["#888888"] + ["#3b7dd8"] * len(report.kernels)
    ax1.barh(range(len(kcs)), cycles, color=colors)
    ax1.set_yticks(range(len(kcs)), names)
    ax1.invert_yaxis()
    ax1.set_xlabel("estimated cycles")
    ax1.set_title(f"kernel cycles (speedup {report.predicted_speedup:.2f}x)")

    labels, iis, cs = [], [], []
    for kc in kcs:
        for l in kc.loops:
            labels.append(f"{kc.kernel}\nloop{l.loop_id}")
            iis.append(l.ii)
            cs.append("#2f9e44" if l.pipelined else "#d9480f")
    ax2.bar(range(len(labels)), iis, color=cs)
    ax2.set_xticks(range(len(labels)), labels, fontsize=7)
    ax2.set_ylabel("initiation interval")
    ax2.set_title("per-loop ii (green = pipelined)")
    if iis and max(iis) / max(1, min(iis)) > 50:
        ax2.set_yscale("log")

    fig.tight_layout()
    path = outdir / "estimate.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return [path]


# --- corpus ----------------------------------------------------------------


def corpus_text(result) -> str:
    lines = ["corpus results"]
    width = max((len(c.name) for c in result.cases), default=8)
    for c in result.cases:
        reps = ",".join(str(k) for k in c.replicas) or "-"
        deps = ",".join(str(d) for d in c.depths) or "-"
        lines.append(
            f"  {c.name:{width}s} {c.verdict:14s} replicas={reps} depths={deps} "
            f"seeds={c.seeds}")
        for n in c.notes:
            lines.append(f"    note: {n}")
        if c.reproducer:
            lines.append(f"    reproduce: {c.reproducer}")
    counts = {}
    for c in result.cases:
        counts[c.verdict] = counts.get(c.verdict, 0) + 1
    tally = ", ".join(f"{v} {k}" for k, v in sorted(counts.items()))
    lines.append("summary: " + (tally or "no fixtures found"))
    lines.append("")
    lines.append(corpus_tsv(result))
    return "\n".join(lines)


def corpus_tsv(result) -> str:
    rows = [_tsv("#case", "name", "verdict", "replicas", "depths", "seeds", "notes")]
    for c in result.cases:
        rows.append(_tsv(
            "case", c.name, c.verdict,
            ",".join(str(k) for k in c.replicas),
            ",".join(str(d) for d in c.depths),
            c.seeds, "; ".join(c.notes)))
    return "\n".join(rows) + "\n"


def render_corpus_figure(result, outdir) -> list:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    palette = {"pass": "#2f9e44", "skipped-unsafe": "#e8b400", "fail": "#d9480f"}
    cases = result.cases
    fig, ax = plt.subplots(figsize=(7, max(2.0, 0.32 * len(cases))))
    ys = range(len(cases))
    ax.barh(ys, [len(c.replicas) or 1 for c in cases],
            color=[palette.get(c.verdict, "#888888") for c in cases])
    ax.set_yticks(ys, [c.name for c in cases], fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("replica counts exercised")
    ax.set_title("differential corpus (green = pass, yellow = skipped-unsafe)")
    fig.tight_layout()
    path = outdir / "corpus.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return [path]
