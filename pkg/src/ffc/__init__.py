"""Feed-forward channel decoupling toolchain for OpenCL-C kernels.

The package splits single work-item kernels into memory/compute kernel
pairs connected by blocking channels, replicates the pair over data
chunks, checks the rewrite by differential interpretation, and prices
designs with an analytic pipeline cost model.

Typical use:

    from ffc import parser, ffsplit, chansim

    unit = parser.parse(source, filename="k.cl")
    kernel = ffsplit.hoist_condition_loads(unit.kernels[0])
    design = ffsplit.split_feedforward(kernel)
    outcome, outputs = chansim.run_design(design.unit, design.manifest, inputs)

`emit`, `validate`, and `replicate` stay module-valued here because
their headline callables share their names; use `ffc.emit.emit(unit)`,
`ffc.validate.validate(unit)`, `ffc.replicate.replicate(design, k)`.
"""

from . import (
    ast,
    chansim,
    corpus,
    costmodel,
    diagnostics,
    emit,
    exprutil,
    ffsplit,
    genbench,
    memdep,
    parser,
    replicate,
    report,
    validate,
)
from .chansim import diff, load_data, run_design, run_single, save_data
from .costmodel import LatencyTable, estimate_design, estimate_ii, estimate_kernel
from .diagnostics import (
    Diagnostic,
    FrontendError,
    OverrideError,
    TransformError,
    UnsafeKernelError,
)
from .ffsplit import (
    dce,
    hoist_condition_loads,
    resolve_private_mlcd,
    serialize_ndrange,
    split_feedforward,
)
from .genbench import BenchSpec, generate
from .memdep import collect_accesses, detect_lcds, safety_verdict
from .parser import parse
from .replicate import partition

__version__ = "0.1.0"

__all__ = [
    "BenchSpec",
    "Diagnostic",
    "FrontendError",
    "LatencyTable",
    "OverrideError",
    "TransformError",
    "UnsafeKernelError",
    "ast",
    "chansim",
    "collect_accesses",
    "corpus",
    "costmodel",
    "dce",
    "detect_lcds",
    "diagnostics",
    "diff",
    "emit",
    "estimate_design",
    "estimate_ii",
    "estimate_kernel",
    "exprutil",
    "ffsplit",
    "genbench",
    "generate",
    "hoist_condition_loads",
    "load_data",
    "memdep",
    "parse",
    "parser",
    "partition",
    "replicate",
    "report",
    "resolve_private_mlcd",
    "run_design",
    "run_single",
    "safety_verdict",
    "save_data",
    "serialize_ndrange",
    "split_feedforward",
    "validate",
    "__version__",
]
