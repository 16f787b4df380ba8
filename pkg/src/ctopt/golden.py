"""Exact discrete timing and area of a legalized design.

Same propagation structure as the relaxed analysis, but with discrete
wiring, the chosen implementation's exact pin capacitances, and hard max.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .impl_lib import ImplSet
from .legalize import LegalDesign
from .liberty import lut_eval
from .sta import Conditions
from .tree import SlotModel


@dataclass
class GoldenReport:
    outputs: list[tuple[int, int]]
    output_at: list[float]
    slack: list[float]
    wns: float
    tns: float
    rat: float
    at: dict[tuple[int, int], list[float]] = field(repr=False, default_factory=dict)
    # propagated slews outside the characterized slew axis (no clamping is applied)
    slew_out_of_grid: int = 0

    @property
    def delay(self) -> float:
        return max(self.output_at)

    def to_dict(self) -> dict:
        return {
            "outputs": [
                {"column": i, "bit": u, "at": a, "slack": s}
                for (i, u), a, s in zip(self.outputs, self.output_at, self.slack)
            ],
            "wns": self.wns,
            "tns": self.tns,
            "rat": self.rat,
            "delay": self.delay,
            "slew_out_of_grid": self.slew_out_of_grid,
        }


def golden_sta(design: LegalDesign, model: SlotModel, impls: ImplSet, cond: Conditions) -> GoldenReport:
    S = model.n_stages
    chosen = [impls[c.kind][k] for c, k in zip(model.compressors, design.impl)]
    # backward: exact load of every signal
    load: dict[tuple[int, int], list[float]] = {}
    for cell in model.stage_cells(S):
        load[(cell.column, S)] = [cond.output_load] * cell.size
    for j in range(S - 1, 0, -1):
        for cell in model.stage_cells(j):
            i = cell.column
            caps = []
            for v, (c, port) in enumerate(cell.slots):
                if c < 0:
                    caps.append(load[(i, j + 1)][cell.pass_dest[v]])
                else:
                    caps.append(chosen[c].cap(model.compressors[c].ports[port]))
            perm = design.perms[(i, j)]
            load[(i, j)] = [caps[perm[u]] for u in range(cell.size)]
    at: dict[tuple[int, int], list[float]] = {}
    slew: dict[tuple[int, int], list[float]] = {}
    for cell in model.stage_cells(0):
        at[(cell.column, 0)] = [cond.at_of(ref) for _, ref in cell.signals]
        slew[(cell.column, 0)] = [cond.slew_of(ref) for _, ref in cell.signals]
    out_of_grid = 0
    for j in range(S):
        nxt_at: dict[int, dict[int, float]] = {}
        nxt_slew: dict[int, dict[int, float]] = {}
        for cell in model.stage_cells(j):
            i = cell.column
            perm = design.perms[(i, j)]
            slot_at = [0.0] * cell.size
            slot_slew = [0.0] * cell.size
            for u, v in enumerate(perm):
                slot_at[v] = at[(i, j)][u]
                slot_slew[v] = slew[(i, j)][u]
            for v, (c, _) in enumerate(cell.slots):
                if c < 0:
                    nxt_at.setdefault(i, {})[cell.pass_dest[v]] = slot_at[v]
                    nxt_slew.setdefault(i, {})[cell.pass_dest[v]] = slot_slew[v]
            for comp in model.compressors_at(i, j):
                impl = chosen[comp.index]
                luts = impl.luts()
                for out, (col_o, u_o) in zip(("sum", "carry"), model.dests[comp.index]):
                    L = load[(col_o, j + 1)][u_o]
                    best_at = best_slew = float("-inf")
                    for q, port in enumerate(comp.ports):
                        v = comp.slot_offset + q
                        dl, sl = luts[(port, out)]
                        s_in = slot_slew[v]
                        if not dl.slew_axis[0] <= s_in <= dl.slew_axis[-1]:
                            out_of_grid += 1
                        best_at = max(best_at, slot_at[v] + lut_eval(dl, s_in, L))
                        best_slew = max(best_slew, lut_eval(sl, s_in, L))
                    nxt_at.setdefault(col_o, {})[u_o] = best_at
                    nxt_slew.setdefault(col_o, {})[u_o] = best_slew
        for col, entries in nxt_at.items():
            at[(col, j + 1)] = [entries[u] for u in range(len(entries))]
            slew[(col, j + 1)] = [nxt_slew[col][u] for u in range(len(entries))]
    outputs = model.outputs()
    output_at = [at[(i, S)][u] for i, u in outputs]
    slack = [cond.rat - a for a in output_at]
    neg = [max(0.0, -s) for s in slack]
    return GoldenReport(outputs, output_at, slack, max(neg), sum(neg), cond.rat, at, out_of_grid)


def golden_area(design: LegalDesign, model: SlotModel, impls: ImplSet) -> float:
    return sum(impls[c.kind][k].area for c, k in zip(model.compressors, design.impl))
