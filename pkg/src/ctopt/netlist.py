"""Structural Verilog emission for legalized trees, plus a gate-level simulator.

The emitted compressor-tree module names every tree signal
``s{stage}_c{column}_b{bit}``; its inputs are the stage-0 signals and its
outputs are the two final rows. The top module adds an AND-array partial
product generator and a behavioral final adder.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import boolexpr
from .impl_lib import ImplSet
from .legalize import LegalDesign
from .liberty import TimingLibrary
from .tree import SlotModel, StructureError


class NetlistError(ValueError):
    """Malformed HDL, unknown cell/module or an illegal connection graph."""


def _sig(j: int, i: int, u: int) -> str:
    return f"s{j}_c{i}_b{u}"


def ct_module_name(model: SlotModel) -> str:
    pp = model.pp
    suffix = f"_acc{pp.acc_width}" if pp.acc_width else ""
    return f"ct_{pp.width_a}x{pp.width_b}{suffix}"


def _decl(kind: str, name: str, width: int | None = None) -> str:
    return f"  {kind} [{width - 1}:0] {name};" if width is not None else f"  {kind} {name};"


def emit_ct(design: LegalDesign, model: SlotModel, impls: ImplSet) -> str:
    design.check(model, impls)
    S = model.n_stages
    ncols = model.n_columns
    inputs = [_sig(0, c.column, u) for c in model.stage_cells(0) for u in range(c.size)]
    lines = [f"module {ct_module_name(model)} ({', '.join(inputs + ['row0', 'row1'])});"]
    lines += [_decl("input", n) for n in inputs]
    lines += [_decl("output", "row0", ncols), _decl("output", "row1", ncols)]
    body = []
    wires = []
    for j in range(S):
        for cell in model.stage_cells(j):
            i = cell.column
            perm = design.perms[(i, j)]
            slot_net = [""] * cell.size
            for u, v in enumerate(perm):
                slot_net[v] = _sig(j, i, u)
            for v, (c, _) in enumerate(cell.slots):
                if c < 0:
                    body.append(f"  assign {_sig(j + 1, i, cell.pass_dest[v])} = {slot_net[v]};")
            for comp in model.compressors_at(i, j):
                impl = impls[comp.kind][design.impl[comp.index]]
                nl = impl.source
                (sc, su), (cc, cu) = model.dests[comp.index]
                port_net = {p: slot_net[comp.slot_offset + q] for q, p in enumerate(comp.ports)}
                port_net["sum"] = _sig(j + 1, sc, su)
                port_net["carry"] = _sig(j + 1, cc, cu)
                local = {nl.port_net(p): n for p, n in port_net.items()}
                for net in nl.internal_nets:
                    local[net] = f"c{comp.index}_{net}"
                    wires.append(local[net])
                for inst in nl.instances:
                    conns = ", ".join(f".{pin}({local[net]})" for pin, net in inst.pins)
                    body.append(f"  {inst.cell} c{comp.index}_{inst.id} ({conns});")
        for cell in model.stage_cells(j + 1):
            wires += [_sig(j + 1, cell.column, u) for u in range(cell.size)]
    for i in range(ncols):
        cell = model.cells.get((i, S))
        size = cell.size if cell is not None else 0
        if size > 2:
            raise StructureError(f"column {i} ends with {size} bits")
        for r in range(2):
            src = _sig(S, i, r) if r < size else "1'b0"
            body.append(f"  assign row{r}[{i}] = {src};")
    lines += [_decl("wire", w) for w in wires]
    lines += body
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def top_module_name(model: SlotModel, kind: str) -> str:
    pp = model.pp
    return f"mac_{pp.width_a}x{pp.width_b}_{pp.acc_width}" if kind == "mac" else f"mult_{pp.width_a}x{pp.width_b}"


def output_width(model: SlotModel) -> int:
    return model.n_columns + 1 if model.pp.acc_width else model.pp.width_a + model.pp.width_b


def emit_top(design: LegalDesign, model: SlotModel, width_a: int, width_b: int, kind: str = "multiplier",
             acc_width: int = 0, and_cell: str = "AND2_X1") -> str:
    kind = {"mult": "multiplier"}.get(kind, kind)
    if kind not in ("multiplier", "mac"):
        raise ValueError(f"unknown top kind {kind!r}")
    pp = model.pp
    want_acc = acc_width if kind == "mac" else 0
    if (pp.width_a, pp.width_b, pp.acc_width) != (width_a, width_b, want_acc):
        raise StructureError(
            f"tree is {pp.width_a}x{pp.width_b}+{pp.acc_width}, requested {width_a}x{width_b}+{want_acc}"
        )
    if len(design.perms) != len(model.matrix_keys()):
        raise StructureError("design does not match the tree")
    ncols = model.n_columns
    pw = output_width(model)
    ports = ["a", "b"] + (["c"] if want_acc else []) + ["p"]
    name = top_module_name(model, "mac" if want_acc else "multiplier")
    lines = [f"module {name} ({', '.join(ports)});",
             _decl("input", "a", width_a), _decl("input", "b", width_b)]
    if want_acc:
        lines.append(_decl("input", "c", want_acc))
    lines += [_decl("output", "p", pw), _decl("wire", "row0", ncols), _decl("wire", "row1", ncols)]
    conns = []
    body = []
    bits = pp.bits()
    for cell in model.stage_cells(0):
        for u, (_, k) in enumerate(cell.signals):
            bit = bits[k]
            if bit[0] == "pp":
                _, x, y = bit
                net = f"pp_{x}_{y}"
                lines.append(_decl("wire", net))
                body.append(f"  {and_cell} ppg_{x}_{y} (.A1(a[{x}]), .A2(b[{y}]), .ZN({net}));")
            else:
                net = f"c[{bit[1]}]"
            conns.append(f".{_sig(0, cell.column, u)}({net})")
    conns += [".row0(row0)", ".row1(row1)"]
    body.append(f"  {ct_module_name(model)} u_ct ({', '.join(conns)});")
    body.append("  assign p = row0 + row1;")
    lines += body
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(//[^\n]*)|(/\*.*?\*/)|(\d+'[bB][01]+)|([A-Za-z_][\w$]*)|(\d+)|(.))", re.S)


def _tokens(text: str) -> list[str]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        pos = m.end()
        if m.group(1) or m.group(2):
            continue
        tok = m.group(3) or m.group(4) or m.group(5) or m.group(6)
        if tok:
            out.append(tok)
    return out


@dataclass
class Module:
    name: str
    ports: list[str]
    inputs: dict[str, int | None] = field(default_factory=dict)
    outputs: dict[str, int | None] = field(default_factory=dict)
    wires: dict[str, int | None] = field(default_factory=dict)
    # (cell or module name, instance name, {pin: net expression})
    instances: list[tuple[str, str, dict[str, tuple]]] = field(default_factory=list)
    # (lhs expression, list of rhs expressions summed)
    assigns: list[tuple[tuple, list[tuple]]] = field(default_factory=list)

    def width(self, name: str) -> int | None:
        for table in (self.inputs, self.outputs, self.wires):
            if name in table:
                return table[name]
        raise NetlistError(f"module {self.name}: undeclared net {name!r}")


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokens(text)
        self.k = 0

    def peek(self):
        return self.toks[self.k] if self.k < len(self.toks) else None

    def take(self, want=None):
        tok = self.peek()
        if tok is None or (want is not None and tok != want):
            raise NetlistError(f"expected {want!r}, found {tok!r}")
        self.k += 1
        return tok

    def ident(self):
        tok = self.take()
        if not re.fullmatch(r"[A-Za-z_][\w$]*", tok):
            raise NetlistError(f"expected identifier, found {tok!r}")
        return tok

    def expr(self) -> tuple:
        tok = self.peek()
        if tok is not None and "'" in tok:
            self.take()
            return ("const", int(tok.split("'")[1][1:], 2))
        name = self.ident()
        if self.peek() == "[":
            self.take()
            idx = int(self.take())
            self.take("]")
            return ("bit", name, idx)
        return ("net", name)

    def range_(self):
        if self.peek() != "[":
            return None
        self.take()
        msb = int(self.take())
        self.take(":")
        lsb = int(self.take())
        self.take("]")
        if lsb != 0:
            raise NetlistError("only [msb:0] ranges are supported")
        return msb + 1

    def modules(self) -> dict[str, Module]:
        mods = {}
        while self.peek() is not None:
            self.take("module")
            m = self.module()
            mods[m.name] = m
        return mods

    def module(self) -> Module:
        name = self.ident()
        ports = []
        if self.peek() == "(":
            self.take()
            while self.peek() != ")":
                ports.append(self.ident())
                if self.peek() == ",":
                    self.take()
            self.take(")")
        self.take(";")
        mod = Module(name, ports)
        while True:
            tok = self.peek()
            if tok is None:
                raise NetlistError(f"module {name}: missing endmodule")
            if tok == "endmodule":
                self.take()
                return mod
            if tok in ("input", "output", "wire"):
                self.take()
                width = self.range_()
                table = {"input": mod.inputs, "output": mod.outputs, "wire": mod.wires}[tok]
                while True:
                    table[self.ident()] = width
                    if self.take() == ";":
                        break
            elif tok == "assign":
                self.take()
                lhs = self.expr()
                self.take("=")
                rhs = [self.expr()]
                while self.peek() == "+":
                    self.take()
                    rhs.append(self.expr())
                self.take(";")
                mod.assigns.append((lhs, rhs))
            else:
                cell = self.ident()
                inst = self.ident()
                self.take("(")
                conns = {}
                while self.peek() != ")":
                    self.take(".")
                    pin = self.ident()
                    self.take("(")
                    conns[pin] = self.expr()
                    self.take(")")
                    if self.peek() == ",":
                        self.take()
                self.take(")")
                self.take(";")
                mod.instances.append((cell, inst, conns))


def parse_verilog(text: str) -> dict[str, Module]:
    return _Parser(text).modules()


# ---------------------------------------------------------------------------
# elaboration and simulation

@lru_cache(maxsize=None)
def _ast(fn: str):
    return boolexpr.parse_expr(fn)


@dataclass
class _Op:
    kind: str  # gate | copy | const | add
    ins: list[str]
    outs: list[str]
    cell: str = ""
    inst: str = ""
    pins_in: list[str] = field(default_factory=list)
    pins_out: list[str] = field(default_factory=list)
    split: int = 0  # add: ins[:split] + ins[split:]
    const: int = 0


class Circuit:
    """A flattened bit-level gate graph of one top module."""

    def __init__(self, modules: dict[str, Module], top: str, lib: TimingLibrary):
        if top not in modules:
            raise NetlistError(f"no module named {top!r}")
        self.lib = lib
        self.modules = modules
        self.top = modules[top]
        self.ops: list[_Op] = []
        self._elaborate(self.top, "", None)
        self.order = self._schedule()

    @classmethod
    def from_text(cls, text: str, top: str, lib: TimingLibrary) -> "Circuit":
        return cls(parse_verilog(text), top, lib)

    @staticmethod
    def _bits(name: str, width: int | None) -> list[str]:
        return [name] if width is None else [f"{name}[{k}]" for k in range(width)]

    def _expand(self, mod: Module, prefix: str, e: tuple) -> list[str] | int:
        if e[0] == "const":
            return e[1]
        if e[0] == "bit":
            width = mod.width(e[1])
            if width is None or not 0 <= e[2] < width:
                raise NetlistError(f"module {mod.name}: bad bit select {e[1]}[{e[2]}]")
            return [f"{prefix}{e[1]}[{e[2]}]"]
        return [prefix + b for b in self._bits(e[1], mod.width(e[1]))]

    def _elaborate(self, mod: Module, prefix: str, bind: dict | None) -> None:
        for lhs, rhs in mod.assigns:
            dst = self._expand(mod, prefix, lhs)
            if isinstance(dst, int):
                raise NetlistError(f"module {mod.name}: assignment to a constant")
            srcs = [self._expand(mod, prefix, r) for r in rhs]
            if len(srcs) == 1:
                src = srcs[0]
                if isinstance(src, int):
                    for k, d in enumerate(dst):
                        self.ops.append(_Op("const", [], [d], const=(src >> k) & 1))
                else:
                    if len(src) != len(dst):
                        raise NetlistError(f"module {mod.name}: width mismatch in assign")
                    for s, d in zip(src, dst):
                        self.ops.append(_Op("copy", [s], [d]))
            elif len(srcs) == 2 and not any(isinstance(s, int) for s in srcs):
                self.ops.append(_Op("add", srcs[0] + srcs[1], dst, split=len(srcs[0])))
            else:
                raise NetlistError(f"module {mod.name}: unsupported assign expression")
        for cell, inst, conns in mod.instances:
            path = prefix + inst
            if cell in self.modules:
                sub = self.modules[cell]
                sub_prefix = path + "/"
                for pin, e in conns.items():
                    outer = self._expand(mod, prefix, e)
                    if pin in sub.inputs:
                        inner = [sub_prefix + b for b in self._bits(pin, sub.inputs[pin])]
                        if isinstance(outer, int):
                            for k, d in enumerate(inner):
                                self.ops.append(_Op("const", [], [d], const=(outer >> k) & 1))
                            continue
                        pairs = zip(outer, inner)
                    elif pin in sub.outputs:
                        inner = [sub_prefix + b for b in self._bits(pin, sub.outputs[pin])]
                        if isinstance(outer, int):
                            raise NetlistError(f"{path}: output {pin} tied to a constant")
                        pairs = zip(inner, outer)
                    else:
                        raise NetlistError(f"{path}: module {cell} has no port {pin}")
                    if len(outer) != len(inner):
                        raise NetlistError(f"{path}: width mismatch on port {pin}")
                    for s, d in pairs:
                        self.ops.append(_Op("copy", [s], [d]))
                missing = set(sub.inputs) - set(conns)
                if missing:
                    raise NetlistError(f"{path}: unconnected inputs {sorted(missing)}")
                self._elaborate(sub, sub_prefix, conns)
                continue
            try:
                lc = self.lib.cell(cell)
            except KeyError:
                raise NetlistError(f"{path}: unknown cell or module {cell!r}") from None
            op = _Op("gate", [], [], cell=cell, inst=path)
            for pin in lc.input_names:
                if pin not in conns:
                    raise NetlistError(f"{path}: input pin {pin} unconnected")
                net = self._expand(mod, prefix, conns[pin])
                if isinstance(net, int):
                    c = f"{path}/{pin}$const"
                    self.ops.append(_Op("const", [], [c], const=net & 1))
                    net = [c]
                op.pins_in.append(pin)
                op.ins.append(net[0])
            outs = {name for name, _ in lc.functions}
            for pin, e in conns.items():
                if pin in lc.input_names:
                    continue
                if pin not in outs:
                    raise NetlistError(f"{path}: cell {cell} has no pin {pin}")
                net = self._expand(mod, prefix, e)
                if isinstance(net, int):
                    raise NetlistError(f"{path}: output {pin} tied to a constant")
                op.pins_out.append(pin)
                op.outs.append(net[0])
            self.ops.append(op)

    def input_bits(self) -> list[str]:
        return [b for name in self.top.inputs for b in self._bits(name, self.top.inputs[name])]

    def _schedule(self) -> list[int]:
        driver: dict[str, int] = {}
        primary = set(self.input_bits())
        for k, op in enumerate(self.ops):
            for net in op.outs:
                if net in driver or net in primary:
                    raise NetlistError(f"net {net} has multiple drivers")
                driver[net] = k
        indeg = [0] * len(self.ops)
        users: dict[int, list[int]] = {}
        for k, op in enumerate(self.ops):
            for net in op.ins:
                if net in primary:
                    continue
                if net not in driver:
                    raise NetlistError(f"net {net} is used but never driven")
                indeg[k] += 1
                users.setdefault(driver[net], []).append(k)
        ready = [k for k, d in enumerate(indeg) if d == 0]
        order = []
        while ready:
            k = ready.pop()
            order.append(k)
            for n in users.get(k, []):
                indeg[n] -= 1
                if indeg[n] == 0:
                    ready.append(n)
        if len(order) != len(self.ops):
            raise NetlistError("combinational cycle in netlist")
        return order

    def gates(self) -> list[_Op]:
        return [op for op in self.ops if op.kind == "gate"]

    def resolve(self, net: str) -> str:
        """Follow copy chains back to the driving gate output or primary input bit."""
        drivers = {op.outs[0]: op for op in self.ops if op.kind == "copy"}
        while net in drivers:
            net = drivers[net].ins[0]
        return net

    def simulate(self, values: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Evaluate integer-valued port vectors; returns integer outputs (uint64)."""
        nets: dict[str, np.ndarray] = {}
        lanes = None
        for name, width in self.top.inputs.items():
            if name not in values:
                raise NetlistError(f"missing input {name}")
            v = np.asarray(values[name], dtype=np.uint64)
            lanes = v.shape if lanes is None else lanes
            for k, b in enumerate(self._bits(name, width)):
                nets[b] = ((v >> np.uint64(k)) & np.uint64(1)).astype(bool)
        lanes = lanes or (1,)
        for k in self.order:
            op = self.ops[k]
            if op.kind == "copy":
                nets[op.outs[0]] = nets[op.ins[0]]
            elif op.kind == "const":
                nets[op.outs[0]] = np.full(lanes, bool(op.const))
            elif op.kind == "add":
                x = _to_int(nets, op.ins[: op.split])
                y = _to_int(nets, op.ins[op.split:])
                s = x + y
                for b, net in enumerate(op.outs):
                    nets[net] = ((s >> np.uint64(b)) & np.uint64(1)).astype(bool)
            else:
                lc = self.lib.cell(op.cell)
                env = dict(zip(op.pins_in, (nets[n] for n in op.ins)))
                fns = dict(lc.functions)
                for pin, net in zip(op.pins_out, op.outs):
                    nets[net] = np.broadcast_to(boolexpr.evaluate(_ast(fns[pin]), env), lanes)
        out = {}
        for name, width in self.top.outputs.items():
            out[name] = _to_int(nets, self._bits(name, width))
        return out


def _to_int(nets: dict[str, np.ndarray], bits: list[str]) -> np.ndarray:
    if len(bits) > 63:
        raise NetlistError("buses wider than 63 bits are not supported")
    acc = np.zeros(np.shape(nets[bits[0]]), dtype=np.uint64)
    for k, b in enumerate(bits):
        acc |= nets[b].astype(np.uint64) << np.uint64(k)
    return acc


# ---------------------------------------------------------------------------
# verification

@dataclass
class VerifyReport:
    passed: bool
    mode: str
    cases: int
    counterexample: dict | None = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "mode": self.mode, "cases": self.cases, "counterexample": self.counterexample}


EXHAUSTIVE_LIMIT = 20


def verify_hdl(text: str, top: str, lib: TimingLibrary, width_a: int, width_b: int, acc_width: int = 0,
               random: int | None = None, seed: int = 0, chunk: int = 1 << 16) -> VerifyReport:
    """Check ``p == a * b (+ c)``: exhaustive up to 20 input bits, else random vectors."""
    circuit = Circuit.from_text(text, top, lib)
    total_bits = width_a + width_b + acc_width
    if random is None and total_bits <= EXHAUSTIVE_LIMIT:
        mode, n = "exhaustive", 1 << total_bits
    else:
        mode, n = "random", int(random if random is not None else 100_000)
    rng = np.random.default_rng(seed)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        if mode == "exhaustive":
            idx = np.arange(done, done + m, dtype=np.uint64)
            a = idx & np.uint64((1 << width_a) - 1)
            b = (idx >> np.uint64(width_a)) & np.uint64((1 << width_b) - 1)
            c = idx >> np.uint64(width_a + width_b)
        else:
            a = rng.integers(0, 1 << width_a, m, dtype=np.uint64)
            b = rng.integers(0, 1 << width_b, m, dtype=np.uint64)
            c = rng.integers(0, 1 << acc_width, m, dtype=np.uint64) if acc_width else np.zeros(m, np.uint64)
        ins = {"a": a, "b": b}
        if acc_width:
            ins["c"] = c
        got = circuit.simulate(ins)["p"]
        want = a * b + (c if acc_width else np.uint64(0))
        bad = np.nonzero(got != want)[0]
        if bad.size:
            k = int(bad[0])
            cex = {"a": int(a[k]), "b": int(b[k]), "p": int(got[k]), "expected": int(want[k])}
            if acc_width:
                cex["c"] = int(c[k])
            return VerifyReport(False, mode, done + k + 1, cex)
        done += m
    return VerifyReport(True, mode, n)


def emit_design(design: LegalDesign, model: SlotModel, impls: ImplSet, kind: str = "multiplier") -> tuple[str, str]:
    """(compressor-tree module text, top module text)."""
    pp = model.pp
    kind = "mac" if pp.acc_width else {"mult": "multiplier"}.get(kind, kind)
    ct = emit_ct(design, model, impls)
    top = emit_top(design, model, pp.width_a, pp.width_b, kind, pp.acc_width)
    return ct, top


def verify(design: LegalDesign, model: SlotModel, impls: ImplSet, lib: TimingLibrary,
           random: int | None = None, seed: int = 0) -> VerifyReport:
    ct, top = emit_design(design, model, impls)
    pp = model.pp
    name = top_module_name(model, "mac" if pp.acc_width else "multiplier")
    return verify_hdl(ct + top, name, lib, pp.width_a, pp.width_b, pp.acc_width, random, seed)
