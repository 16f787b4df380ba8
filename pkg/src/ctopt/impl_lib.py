"""Gate-level compressor implementations and their macro timing models."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import boolexpr
from .liberty import LibraryCell, Lut2D, TimingLibrary, lut_eval, worst_case_arcs

DEFAULT_SLEW_GRID = (0.002, 0.01, 0.03, 0.08, 0.2)
DEFAULT_LOAD_GRID = (0.5, 2.0, 4.0, 8.0, 16.0)

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CATALOG = DATA_DIR / "default_impls.json"


class ImplError(ValueError):
    pass


@dataclass(frozen=True)
class CompressorKind:
    tag: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...] = ("sum", "carry")

    def reference(self, bits: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        total = sum(bits[p].astype(np.int64) for p in self.inputs)
        return {"sum": (total & 1).astype(bool), "carry": (total >> 1).astype(bool)}


C32 = CompressorKind("C32", ("a", "b", "cin"))
C22 = CompressorKind("C22", ("a", "b"))
KINDS = {"C32": C32, "C22": C22}


@dataclass(frozen=True)
class Instance:
    id: str
    cell: str
    pins: tuple[tuple[str, str], ...]  # cell pin -> net


@dataclass(frozen=True)
class ImplNetlist:
    name: str
    kind: CompressorKind
    instances: tuple[Instance, ...]
    port_bindings: tuple[tuple[str, str], ...]  # compressor port -> net

    @classmethod
    def from_dict(cls, d: dict) -> "ImplNetlist":
        try:
            kind = KINDS[d["kind"]]
        except KeyError:
            raise ImplError(f"{d.get('name')}: unknown compressor kind {d.get('kind')!r}") from None
        insts = tuple(Instance(i["id"], i["cell"], tuple(i["pins"].items())) for i in d["instances"])
        ports = tuple((p, d["ports"][p]) for p in kind.inputs + kind.outputs)
        return cls(d["name"], kind, insts, ports)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.tag,
            "instances": [{"id": i.id, "cell": i.cell, "pins": dict(i.pins)} for i in self.instances],
            "ports": dict(self.port_bindings),
        }

    def port_net(self, port: str) -> str:
        return dict(self.port_bindings)[port]

    @property
    def internal_nets(self) -> list[str]:
        ext = {n for _, n in self.port_bindings}
        return sorted({n for i in self.instances for _, n in i.pins} - ext)

    def check(self, lib: TimingLibrary) -> list[Instance]:
        """Validate structure; return instances in topological order."""
        drivers: dict[str, str] = {}
        sinks: dict[str, list[str]] = {}
        for inst in self.instances:
            cell = lib.cell(inst.cell)
            pins = dict(inst.pins)
            for p in cell.input_names:
                if p not in pins:
                    raise ImplError(f"{self.name}/{inst.id}: input pin {p} unconnected")
                sinks.setdefault(pins[p], []).append(inst.id)
            for p in cell.output_pins:
                if p in pins:
                    net = pins[p]
                    if net in drivers:
                        raise ImplError(f"{self.name}: net {net} has multiple drivers")
                    drivers[net] = inst.id
        for port in self.kind.inputs:
            net = self.port_net(port)
            if net in drivers:
                raise ImplError(f"{self.name}: input port {port} net is driven by a cell")
            if not sinks.get(net):
                raise ImplError(f"{self.name}: input port {port} drives no cell input")
        for port in self.kind.outputs:
            if self.port_net(port) not in drivers:
                raise ImplError(f"{self.name}: output port {port} is not driven by a cell")
        inputs_ok = {self.port_net(p) for p in self.kind.inputs}
        for net in sinks:
            if net not in drivers and net not in inputs_ok:
                raise ImplError(f"{self.name}: net {net} has no driver")
        return _topo(self.instances, lib, self.name)


def _topo(instances, lib: TimingLibrary, where: str) -> list[Instance]:
    by_net = {}
    for inst in instances:
        cell = lib.cell(inst.cell)
        for p, n in inst.pins:
            if p in cell.output_pins:
                by_net[n] = inst
    order, state = [], {}

    def visit(inst):
        s = state.get(inst.id)
        if s == 1:
            raise ImplError(f"{where}: combinational cycle through {inst.id}")
        if s == 2:
            return
        state[inst.id] = 1
        cell = lib.cell(inst.cell)
        for p, n in inst.pins:
            if p in cell.input_names and n in by_net:
                visit(by_net[n])
        state[inst.id] = 2
        order.append(inst)

    for inst in instances:
        visit(inst)
    return order


def simulate_netlist(netlist: ImplNetlist, lib: TimingLibrary, bits: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Evaluate the compressor's output ports for boolean input lanes."""
    nets = {netlist.port_net(p): np.asarray(bits[p], dtype=bool) for p in netlist.kind.inputs}
    for inst in netlist.check(lib):
        cell = lib.cell(inst.cell)
        pins = dict(inst.pins)
        env = {p: nets[pins[p]] for p in cell.input_names}
        for out, fn in cell.functions:
            if out in pins:
                nets[pins[out]] = boolexpr.evaluate(_ast(fn), env)
    return {p: nets[netlist.port_net(p)] for p in netlist.kind.outputs}


@lru_cache(maxsize=None)
def _ast(fn: str):
    return boolexpr.parse_expr(fn)


def verify_function(netlist: ImplNetlist, lib: TimingLibrary) -> bool:
    """Exhaustive truth-table check against the compressor's arithmetic."""
    n = len(netlist.kind.inputs)
    rows = np.array(list(itertools.product([False, True], repeat=n)), dtype=bool)
    bits = {p: rows[:, k] for k, p in enumerate(netlist.kind.inputs)}
    got = simulate_netlist(netlist, lib, bits)
    want = netlist.kind.reference(bits)
    return all(np.array_equal(got[p], want[p]) for p in netlist.kind.outputs)


@dataclass(frozen=True)
class CompressorImpl:
    source: ImplNetlist
    area: float
    input_cap: tuple[tuple[str, float], ...]
    macro_luts: tuple[tuple[tuple[str, str], Lut2D, Lut2D], ...]

    @property
    def name(self) -> str:
        return self.source.name

    @property
    def kind(self) -> CompressorKind:
        return self.source.kind

    def cap(self, port: str) -> float:
        return dict(self.input_cap)[port]

    def luts(self) -> dict[tuple[str, str], tuple[Lut2D, Lut2D]]:
        return {k: (d, s) for k, d, s in self.macro_luts}

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "area": self.area,
            "input_cap": dict(self.input_cap),
            "macro_luts": [
                {"input": k[0], "output": k[1], "delay": d.to_dict(), "slew": s.to_dict()}
                for k, d, s in self.macro_luts
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompressorImpl":
        src = ImplNetlist.from_dict(d["source"])
        return cls(
            src,
            float(d["area"]),
            tuple((p, float(d["input_cap"][p])) for p in src.kind.inputs),
            tuple(
                ((m["input"], m["output"]), Lut2D.from_dict(m["delay"]), Lut2D.from_dict(m["slew"]))
                for m in d["macro_luts"]
            ),
        )


class _MacroTimer:
    """Exact internal STA of one implementation netlist."""

    def __init__(self, netlist: ImplNetlist, lib: TimingLibrary):
        self.netlist = netlist
        self.order = netlist.check(lib)
        self.cells: dict[str, LibraryCell] = {i.id: lib.cell(i.cell) for i in self.order}
        self.wc = {name: worst_case_arcs(lib.cell(name)) for name in {i.cell for i in self.order}}
        self.pin_load: dict[str, float] = {}
        for inst in self.order:
            cell = self.cells[inst.id]
            for p, n in inst.pins:
                if p in cell.input_names:
                    self.pin_load[n] = self.pin_load.get(n, 0.0) + cell.pin_cap(p)

    def input_cap(self, port: str) -> float:
        return self.pin_load[self.netlist.port_net(port)]

    def run(self, u: str, v: str, slew: float, load: float) -> tuple[float, float] | None:
        loads = dict(self.pin_load)
        out_net = self.netlist.port_net(v)
        loads[out_net] = loads.get(out_net, 0.0) + load
        at = {self.netlist.port_net(u): 0.0}
        sl = {self.netlist.port_net(u): slew}
        for inst in self.order:
            cell = self.cells[inst.id]
            pins = dict(inst.pins)
            arcs = self.wc[inst.cell]
            for o in cell.output_pins:
                if o not in pins:
                    continue
                onet = pins[o]
                best_at = best_sl = None
                for p in cell.input_names:
                    inet = pins[p]
                    if inet not in at or (p, o) not in arcs:
                        continue
                    dl, sw = arcs[(p, o)]
                    t = at[inet] + lut_eval(dl, sl[inet], loads.get(onet, 0.0))
                    s = lut_eval(sw, sl[inet], loads.get(onet, 0.0))
                    best_at = t if best_at is None or t > best_at else best_at
                    best_sl = s if best_sl is None or s > best_sl else best_sl
                if best_at is not None:
                    at[onet] = best_at
                    sl[onet] = best_sl
        if out_net not in at:
            return None
        return at[out_net], sl[out_net]


def macro_point(netlist: ImplNetlist, lib: TimingLibrary, u: str, v: str, slew: float, load: float):
    """Worst path delay and endpoint slew from port ``u`` to port ``v``."""
    return _MacroTimer(netlist, lib).run(u, v, slew, load)


def characterize(
    netlist: ImplNetlist,
    lib: TimingLibrary,
    slew_grid=DEFAULT_SLEW_GRID,
    load_grid=DEFAULT_LOAD_GRID,
) -> CompressorImpl:
    if not verify_function(netlist, lib):
        raise ImplError(f"{netlist.name}: netlist does not realize a {netlist.kind.tag} compressor")
    slew_grid = tuple(float(s) for s in slew_grid)
    load_grid = tuple(float(c) for c in load_grid)
    timer = _MacroTimer(netlist, lib)
    luts = []
    for u in netlist.kind.inputs:
        for v in netlist.kind.outputs:
            pts = [[timer.run(u, v, s, c) for c in load_grid] for s in slew_grid]
            if pts[0][0] is None:
                # every output of a 3:2/2:2 compressor depends on every input
                raise ImplError(f"{netlist.name}: no combinational path {u}->{v}")
            delay = Lut2D(slew_grid, load_grid, tuple(tuple(p[0] for p in row) for row in pts))
            slew = Lut2D(slew_grid, load_grid, tuple(tuple(p[1] for p in row) for row in pts))
            luts.append(((u, v), delay, slew))
    area = sum(lib.cell(i.cell).area for i in netlist.instances)
    caps = tuple((p, timer.input_cap(p)) for p in netlist.kind.inputs)
    return CompressorImpl(netlist, area, caps, tuple(luts))


def load_catalog(path: str | Path = DEFAULT_CATALOG) -> list[ImplNetlist]:
    doc = json.loads(Path(path).read_text())
    return [ImplNetlist.from_dict(d) for d in doc["implementations"]]


@dataclass(frozen=True)
class ImplSet:
    """Characterized implementations grouped by compressor kind."""

    impls: dict[str, tuple[CompressorImpl, ...]]

    def __getitem__(self, tag: str) -> tuple[CompressorImpl, ...]:
        return self.impls[tag]

    def to_dict(self) -> dict:
        return {tag: [i.to_dict() for i in items] for tag, items in sorted(self.impls.items())}

    @classmethod
    def from_dict(cls, d: dict) -> "ImplSet":
        return cls({tag: tuple(CompressorImpl.from_dict(x) for x in items) for tag, items in d.items()})

    def index(self, tag: str, name: str) -> int:
        for k, impl in enumerate(self.impls[tag]):
            if impl.name == name:
                return k
        raise KeyError(f"no {tag} implementation named {name!r}")


def characterize_all(netlists, lib: TimingLibrary, slew_grid=DEFAULT_SLEW_GRID, load_grid=DEFAULT_LOAD_GRID) -> ImplSet:
    grouped: dict[str, list[CompressorImpl]] = {"C32": [], "C22": []}
    for nl in netlists:
        grouped[nl.kind.tag].append(characterize(nl, lib, slew_grid, load_grid))
    for tag, items in grouped.items():
        if not items:
            raise ImplError(f"catalog has no {tag} implementation")
    return ImplSet({k: tuple(v) for k, v in grouped.items()})
