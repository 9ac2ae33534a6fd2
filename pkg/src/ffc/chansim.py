"""Deterministic interpreter for kernels and channel-connected designs.

Execution model
---------------
Each kernel instance runs as a coroutine over a shared MachineState.
The scheduler is cooperative round-robin in manifest order: a kernel
runs until it blocks on a channel (write to a full FIFO, read from an
empty one), finishes, or exhausts its time slice when a quantum is set.
Scheduling is fully deterministic; correct designs must produce
identical memory contents under any schedule, which the tests exercise
by permuting start order and varying the quantum.

Numeric semantics (shared by every run, so differential comparisons are
bit-exact by construction):

* integer binary ops compute exactly, then wrap to signed 64 bits;
  assignments and stores wrap to the declared width of the target
* integer division/remainder truncate toward zero; dividing by zero
  traps, as do out-of-bounds accesses and reads of uninitialized
  scalars
* `float` values round through IEEE binary32 on every assignment or
  store to a float-typed target; `double` stays at Python precision
* `&&`/`||` short-circuit

Outcomes: "completed", "deadlock" (every unfinished kernel blocked on a
channel), "trap", or "fuel_exhausted" (total statement budget spent).
A channel left non-empty after all kernels complete is reported as a
trap: the design produced values nobody consumed.
"""
from __future__ import annotations

import json
import struct
from collections import deque
from dataclasses import dataclass, field

from . import ast
from .ast import (
    Assign, Binary, Block, BuiltinCall, ChannelRead, ChannelWrite, Decl,
    FloatLit, For, If, IntLit, KernelDef, ParamRef, Store, Subscript,
    TranslationUnit, Unary, VarRef,
)
from .validate import type_env

DEFAULT_FUEL = 100_000_000

_F32 = struct.Struct("<f")
_UNINIT = object()


class _Trap(Exception):
    pass


class _FuelExhausted(Exception):
    pass


@dataclass
class ChannelState:
    name: str
    elem_type: str
    capacity: int
    queue: deque = field(default_factory=deque)
    writes: int = 0
    reads: int = 0
    high_water: int = 0


@dataclass
class SimOutcome:
    status: str  # completed | deadlock | trap | fuel_exhausted
    steps: int
    detail: str = ""
    blocked: list = field(default_factory=list)  # [(kernel, op, channel)]
    channel_stats: dict = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.status == "completed"


class TraceRecorder:
    """Collects (kernel, kind, node_site, array, addr, loop_iters) events.

    loop_iters is a tuple of (loop_id, completed_iterations) pairs for
    the enclosing loop stack at the moment of the access.
    """

    def __init__(self):
        self.events = []

    def on_access(self, kernel, kind, node_site, array, addr, loop_iters):
        self.events.append((kernel, kind, node_site, array, addr, loop_iters))


class MachineState:
    """Buffers, scalars, and channels shared by the kernels of one run."""

    def __init__(self):
        self.buffers = {}
        self.buffer_types = {}
        self.scalars = {}
        self.channels = {}
        self.steps = 0
        self.slice_steps = 0

    @classmethod
    def from_inputs(cls, inputs: dict):
        m = cls()
        for name, value in (inputs.get("scalars") or {}).items():
            m.scalars[name] = value
        for name, spec in (inputs.get("buffers") or {}).items():
            ty = spec["type"]
            m.buffer_types[name] = ty
            m.buffers[name] = [_coerce(ty, v) for v in spec["data"]]
        return m

    def outputs(self) -> dict:
        return {
            "scalars": dict(self.scalars),
            "buffers": {
                name: {"type": self.buffer_types[name], "data": list(data)}
                for name, data in self.buffers.items()
            },
        }


def _wrap_int(v: int, ty: str) -> int:
    bits = ast.TYPE_BITS[ty]
    if ty == "bool":
        return 1 if v else 0
    m = v & ((1 << bits) - 1)
    if ast.TYPE_SIGNED[ty] and m >= 1 << (bits - 1):
        m -= 1 << bits
    return m


def _coerce(ty: str, v):
    if ty in ast.FLOAT_TYPES:
        v = float(v)
        if ty == "float":
            return _F32.unpack(_F32.pack(v))[0]
        return v
    if isinstance(v, float):
        v = int(v)  # C float->int conversion truncates
    return _wrap_int(v, ty)


def _c_int_div(a: int, b: int) -> int:
    if b == 0:
        raise _Trap("integer division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


class _Interp:
    """One kernel instance executing as a generator.

    Yields ("write", chan, value) / ("read", chan) for channel ops and
    ("pause",) at quantum boundaries; receives the read value via send().
    """

    def __init__(self, kernel: KernelDef, machine: MachineState, binding: dict,
                 fuel: int, quantum, trace):
        self.kernel = kernel
        self.machine = machine
        self.binding = binding  # param name -> ("buffer", global) | ("scalar", value)
        self.fuel = fuel
        self.quantum = quantum
        self.trace = trace
        self.env = {}
        self.types = type_env(kernel)
        self.loop_stack = []

    def run(self):
        yield from self._block(self.kernel.body)

    # -- statements --

    def _step(self):
        m = self.machine
        m.steps += 1
        if m.steps >= self.fuel:
            raise _FuelExhausted()
        if self.quantum is not None:
            m.slice_steps += 1

    def _block(self, block: Block):
        for s in block.stmts:
            yield from self._stmt(s)

    def _stmt(self, s):
        self._step()
        if self.quantum is not None and self.machine.slice_steps >= self.quantum:
            self.machine.slice_steps = 0
            yield ("pause",)
        if isinstance(s, Block):
            yield from self._block(s)
        elif isinstance(s, Decl):
            self.env[s.name] = _coerce(s.type, self._eval(s.init)) if s.init is not None else _UNINIT
        elif isinstance(s, Assign):
            ty = self.types.get(s.name, "int")
            self.env[s.name] = _coerce(ty, self._eval(s.value))
        elif isinstance(s, Store):
            buf, gname, ty = self._buffer(s.base)
            idx = self._eval(s.index)
            self._check_index(s.base, gname, buf, idx)
            buf[idx] = _coerce(ty, self._eval(s.value))
            if self.trace is not None:
                self.trace.on_access(self.kernel.name, "store", s.site, s.base, idx, tuple((l[0], l[1]) for l in self.loop_stack))
        elif isinstance(s, If):
            if self._truthy(self._eval(s.cond)):
                yield from self._block(s.then)
            elif s.orelse is not None:
                yield from self._block(s.orelse)
        elif isinstance(s, For):
            yield from self._for(s)
        elif isinstance(s, ChannelWrite):
            chan = self.machine.channels[s.channel]
            value = _coerce(chan.elem_type, self._eval(s.value))
            yield ("write", s.channel, value)
        elif isinstance(s, ChannelRead):
            chan = self.machine.channels[s.channel]
            value = yield ("read", s.channel)
            value = _coerce(chan.elem_type, value)
            if s.name is not None:
                ty = s.decl_type or self.types.get(s.name, chan.elem_type)
                self.env[s.name] = _coerce(ty, value)
        else:
            raise _Trap(f"cannot execute {type(s).__name__}")

    def _for(self, s: For):
        if s.var is not None:
            ty = s.var_type or self.types.get(s.var, "int")
            self.env[s.var] = _coerce(ty, self._eval(s.init))
            frame = [s.loop_id, 0]
            self.loop_stack.append(frame)
            while True:
                self._step()
                if not self._truthy(self._eval(s.cond)):
                    break
                yield from self._block(s.body)
                self.env[s.var] = _coerce(ty, self.env[s.var] + s.step)
                frame[1] += 1
            self.loop_stack.pop()
        else:
            frame = [None, 0]
            self.loop_stack.append(frame)
            while True:
                self._step()
                if not self._truthy(self._eval(s.cond)):
                    break
                yield from self._block(s.body)
                frame[1] += 1
            self.loop_stack.pop()

    # -- expressions --

    def _buffer(self, base: str):
        kind, target = self.binding[base]
        if kind != "buffer":
            raise _Trap(f"{base!r} is not bound to a buffer")
        return self.machine.buffers[target], target, self.machine.buffer_types[target]

    def _check_index(self, base, gname, buf, idx):
        if not isinstance(idx, int):
            raise _Trap(f"non-integer index into {base!r}")
        if idx < 0 or idx >= len(buf):
            raise _Trap(f"index {idx} out of bounds for {base!r} (len {len(buf)}, buffer {gname!r})")

    def _truthy(self, v) -> bool:
        return v != 0

    def _eval(self, e):
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, FloatLit):
            return e.value
        if isinstance(e, VarRef):
            v = self.env.get(e.name, _UNINIT)
            if v is _UNINIT:
                raise _Trap(f"read of uninitialized scalar {e.name!r}")
            return v
        if isinstance(e, ParamRef):
            kind, value = self.binding[e.name]
            if kind != "scalar":
                raise _Trap(f"{e.name!r} is not a scalar parameter")
            return value
        if isinstance(e, Subscript):
            buf, gname, _ = self._buffer(e.base)
            idx = self._eval(e.index)
            self._check_index(e.base, gname, buf, idx)
            if self.trace is not None:
                self.trace.on_access(self.kernel.name, "load", e.site, e.base, idx, tuple((l[0], l[1]) for l in self.loop_stack))
            return buf[idx]
        if isinstance(e, Unary):
            v = self._eval(e.operand)
            if e.op == "-":
                return _wrap_int(-v, "long") if isinstance(v, int) else -v
            if e.op == "+":
                return v
            if e.op == "!":
                return 0 if self._truthy(v) else 1
            raise _Trap(f"unknown unary {e.op!r}")
        if isinstance(e, Binary):
            op = e.op
            if op == "&&":
                if not self._truthy(self._eval(e.left)):
                    return 0
                return 1 if self._truthy(self._eval(e.right)) else 0
            if op == "||":
                if self._truthy(self._eval(e.left)):
                    return 1
                return 1 if self._truthy(self._eval(e.right)) else 0
            a = self._eval(e.left)
            b = self._eval(e.right)
            if op == "==":
                return int(a == b)
            if op == "!=":
                return int(a != b)
            if op == "<":
                return int(a < b)
            if op == "<=":
                return int(a <= b)
            if op == ">":
                return int(a > b)
            if op == ">=":
                return int(a >= b)
            both_int = isinstance(a, int) and isinstance(b, int)
            if op == "+":
                r = a + b
            elif op == "-":
                r = a - b
            elif op == "*":
                r = a * b
            elif op == "/":
                if both_int:
                    r = _c_int_div(a, b)
                else:
                    if b == 0:
                        raise _Trap("floating division by zero")
                    r = a / b
            elif op == "%":
                if not both_int:
                    raise _Trap("% applied to floating operands")
                if b == 0:
                    raise _Trap("integer remainder by zero")
                r = a - _c_int_div(a, b) * b
            else:
                raise _Trap(f"unknown operator {op!r}")
            return _wrap_int(r, "long") if both_int else r
        if isinstance(e, BuiltinCall):
            raise _Trap(f"{e.name} has no meaning in single work-item execution")
        raise _Trap(f"cannot evaluate {type(e).__name__}")


@dataclass
class _Proc:
    name: str
    gen: object
    pending: tuple = None
    done: bool = False


def _identity_binding(kernel: KernelDef, machine: MachineState) -> dict:
    binding = {}
    for p in kernel.params:
        if p.is_pointer:
            if p.name not in machine.buffers:
                raise KeyError(f"data file missing buffer {p.name!r} for kernel {kernel.name!r}")
            binding[p.name] = ("buffer", p.name)
        else:
            if p.name not in machine.scalars:
                raise KeyError(f"data file missing scalar {p.name!r} for kernel {kernel.name!r}")
            binding[p.name] = ("scalar", _coerce(p.type, machine.scalars[p.name]))
    return binding


def run_single(kernel: KernelDef, inputs: dict, fuel: int = DEFAULT_FUEL, trace=None):
    """Execute one channel-free kernel to completion.

    Returns (SimOutcome, outputs dict). Kernels containing channel ops
    are rejected up front; use run_design for those.
    """
    for s in ast.walk_stmts(kernel.body):
        if isinstance(s, (ChannelRead, ChannelWrite)):
            raise ValueError(f"kernel {kernel.name!r} uses channels; run_single is for channel-free kernels")
    machine = MachineState.from_inputs(inputs)
    binding = _identity_binding(kernel, machine)
    interp = _Interp(kernel, machine, binding, fuel, None, trace)
    gen = interp.run()
    try:
        next(gen)
        outcome = SimOutcome("trap", machine.steps, detail="unexpected channel operation")
    except StopIteration:
        outcome = SimOutcome("completed", machine.steps)
    except _Trap as t:
        outcome = SimOutcome("trap", machine.steps, detail=str(t))
    except _FuelExhausted:
        outcome = SimOutcome("fuel_exhausted", machine.steps)
    return outcome, machine.outputs()


def run_design(unit: TranslationUnit, manifest: dict, inputs: dict,
               depth=None, fuel: int = DEFAULT_FUEL, quantum=None,
               order=None, trace=None):
    """Execute every kernel of a design concurrently over shared state.

    ``manifest`` follows the launch-manifest schema (kernels with args,
    channels with depths, buffers).  ``depth`` overrides every channel's
    capacity; ``order`` permutes the round-robin schedule (indexes into
    the manifest kernel list); ``quantum`` bounds the statements one
    kernel may run before yielding its turn.
    """
    machine = MachineState.from_inputs(inputs)
    for c in manifest.get("channels", ()):
        cap = depth if depth is not None else c["depth"]
        if cap < 1:
            raise ValueError(f"channel {c['name']!r} depth must be >= 1")
        machine.channels[c["name"]] = ChannelState(c["name"], c["type"], cap)

    procs = []
    entries = list(manifest["kernels"])
    if order is not None:
        if sorted(order) != list(range(len(entries))):
            raise ValueError("order must be a permutation of kernel indexes")
        entries = [entries[i] for i in order]
    for entry in entries:
        kernel = unit.kernel(entry["name"])
        if kernel is None:
            raise KeyError(f"manifest kernel {entry['name']!r} not found in the translation unit")
        binding = {}
        args = entry.get("args", [p.name for p in kernel.params])
        if len(args) != len(kernel.params):
            raise ValueError(f"manifest args for {kernel.name!r} do not match its {len(kernel.params)} params")
        for p, arg in zip(kernel.params, args):
            if p.is_pointer:
                if arg not in machine.buffers:
                    raise KeyError(f"data file missing buffer {arg!r} (kernel {kernel.name!r} param {p.name!r})")
                binding[p.name] = ("buffer", arg)
            else:
                if arg not in machine.scalars:
                    raise KeyError(f"data file missing scalar {arg!r} (kernel {kernel.name!r} param {p.name!r})")
                binding[p.name] = ("scalar", _coerce(p.type, machine.scalars[arg]))
        interp = _Interp(kernel, machine, binding, fuel, quantum, trace)
        procs.append(_Proc(name=kernel.name, gen=interp.run()))

    outcome = _schedule(machine, procs)
    outcome.channel_stats = {
        name: {"writes": ch.writes, "reads": ch.reads, "high_water": ch.high_water, "depth": ch.capacity}
        for name, ch in machine.channels.items()
    }
    return outcome, machine.outputs()


def _try_op(machine: MachineState, op):
    """Attempt a channel op; returns (True, read_value|None) or (False, None)."""
    kind, chan_name = op[0], op[1]
    ch = machine.channels.get(chan_name)
    if ch is None:
        raise _Trap(f"channel {chan_name!r} is not in the manifest")
    if kind == "write":
        if len(ch.queue) < ch.capacity:
            ch.queue.append(op[2])
            ch.writes += 1
            ch.high_water = max(ch.high_water, len(ch.queue))
            return True, None
        return False, None
    if ch.queue:
        ch.reads += 1
        return True, ch.queue.popleft()
    return False, None


def _schedule(machine: MachineState, procs) -> SimOutcome:
    try:
        while True:
            progressed = False
            unfinished = False
            for p in procs:
                if p.done:
                    continue
                unfinished = True
                progressed |= _advance(machine, p)
            if not unfinished:
                break
            if not progressed:
                blocked = [
                    (p.name, p.pending[0], p.pending[1])
                    for p in procs
                    if not p.done and p.pending is not None
                ]
                chans = sorted({b[2] for b in blocked})
                return SimOutcome(
                    "deadlock", machine.steps,
                    detail=f"all kernels blocked on channels {chans}",
                    blocked=blocked,
                )
    except _Trap as t:
        return SimOutcome("trap", machine.steps, detail=str(t))
    except _FuelExhausted:
        return SimOutcome("fuel_exhausted", machine.steps, detail="statement budget exhausted")
    undrained = [(name, len(ch.queue)) for name, ch in machine.channels.items() if ch.queue]
    if undrained:
        detail = ", ".join(f"{name} holds {n} unread value(s)" for name, n in undrained)
        return SimOutcome("trap", machine.steps, detail=f"undrained channels after completion: {detail}")
    return SimOutcome("completed", machine.steps)


def _advance(machine: MachineState, p: _Proc) -> bool:
    """Run one process until it blocks, pauses, or finishes."""
    machine.slice_steps = 0
    send_val = None
    progressed = False
    if p.pending is not None:
        kind = p.pending[0]
        ok, value = _try_op(machine, p.pending)
        if not ok:
            return False
        p.pending = None
        progressed = True
        send_val = value if kind == "read" else None
    while True:
        before = machine.steps
        try:
            item = p.gen.send(send_val)
        except StopIteration:
            p.done = True
            return True
        progressed |= machine.steps > before
        if item[0] == "pause":
            return True
        ok, value = _try_op(machine, item)
        if not ok:
            p.pending = item
            return progressed
        progressed = True
        send_val = value if item[0] == "read" else None


# --- data files ---------------------------------------------------------


def load_data(path: str) -> dict:
    with open(path) as f:
        data = json.load(f)
    if "buffers" not in data and "scalars" not in data:
        raise ValueError(f"{path}: expected a data file with 'scalars' and 'buffers' keys")
    for name, spec in (data.get("buffers") or {}).items():
        if not isinstance(spec, dict) or "type" not in spec or "data" not in spec:
            hint = (" (this looks like a fixture input recipe; fabricate concrete data"
                    " with corpus.make_inputs and chansim.save_data)"
                    if isinstance(spec, dict) and "role" in spec else "")
            raise ValueError(f"{path}: buffer {name!r} needs 'type' and 'data' entries{hint}")
    for name, value in (data.get("scalars") or {}).items():
        if not isinstance(value, (int, float)):
            raise ValueError(f"{path}: scalar {name!r} must be a number, not {type(value).__name__}")
    return data


def save_data(path: str, data: dict, stats: dict = None):
    out = dict(data)
    if stats is not None:
        out["stats"] = stats
    with open(path, "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")


@dataclass
class EquivalenceReport:
    equivalent: bool
    reasons: list = field(default_factory=list)


def _f32_bits(v: float) -> bytes:
    return struct.pack("<d", v)


def diff(expected: dict, actual: dict, ulps: int = 0) -> EquivalenceReport:
    """Compare two outputs dicts buffer by buffer.

    Bit-exact by default (NaNs equal themselves); ``ulps`` > 0 allows a
    bounded relative float difference instead.
    """
    import math

    reasons = []
    eb, ab = expected.get("buffers", {}), actual.get("buffers", {})
    for name in sorted(set(eb) | set(ab)):
        if name not in eb:
            reasons.append(f"unexpected buffer {name!r}")
            continue
        if name not in ab:
            reasons.append(f"missing buffer {name!r}")
            continue
        x, y = eb[name]["data"], ab[name]["data"]
        if len(x) != len(y):
            reasons.append(f"{name}: length {len(x)} vs {len(y)}")
            continue
        is_float = eb[name]["type"] in ("float", "double")
        for i, (a, b) in enumerate(zip(x, y)):
            if not is_float or ulps == 0:
                same = _f32_bits(float(a)) == _f32_bits(float(b)) if is_float else a == b
                if not same:
                    reasons.append(f"{name}[{i}]: {a!r} != {b!r}")
                    break
            else:
                if math.isnan(a) and math.isnan(b):
                    continue
                tol = ulps * math.ulp(max(abs(float(a)), abs(float(b)), 1e-45))
                if abs(float(a) - float(b)) > tol:
                    reasons.append(f"{name}[{i}]: {a!r} != {b!r} beyond {ulps} ulps")
                    break
    return EquivalenceReport(equivalent=not reasons, reasons=reasons)
