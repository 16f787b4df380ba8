"""Differentiable static timing analysis over a relaxed compressor tree.

Interconnection matrices ``M[(i, j)][u][v]`` give the probability that signal
``u`` of column ``i`` at stage ``j`` lands on slot ``v``; implementation
vectors ``p[c][k]`` give the probability that compressor ``c`` uses the
``k``-th implementation of its kind. Timing quantities are expectations
under these distributions, with log-sum-exp in place of max.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import engine
from .engine import ParamTensor, Tape, Var, combine, dot, hardmax, lse, min0, value, vsum
from .impl_lib import ImplSet
from .liberty import lut_eval_grad
from .tree import SlotModel


@dataclass
class Conditions:
    """Operating conditions and smoothing for one timing evaluation."""

    input_slew: float = 0.02
    input_at: float = 0.0
    output_load: float = 3.0
    rat: float = 0.0
    gamma: float = 0.01

    def at_of(self, bit: int) -> float:
        v = self.input_at
        return float(v[bit]) if isinstance(v, (list, tuple, np.ndarray)) else float(v)

    def slew_of(self, bit: int) -> float:
        v = self.input_slew
        return float(v[bit]) if isinstance(v, (list, tuple, np.ndarray)) else float(v)


@dataclass
class RelaxedVars:
    """Auxiliary (pre-softmax) parameters of one relaxed design."""

    m_aux: dict[tuple[int, int], ParamTensor]
    p_aux: list[ParamTensor]

    def params(self) -> list[ParamTensor]:
        return list(self.m_aux.values()) + list(self.p_aux)

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def copy(self) -> "RelaxedVars":
        return RelaxedVars(
            {k: ParamTensor(v.values.copy()) for k, v in self.m_aux.items()},
            [ParamTensor(p.values.copy()) for p in self.p_aux],
        )

    def numeric(self) -> "Probabilities":
        """Softmax images as plain floats."""
        M = {k: [_softmax_np(row) for row in t.values] for k, t in self.m_aux.items()}
        p = [_softmax_np(t.values) for t in self.p_aux]
        return Probabilities(M, p)

    def derive(self, tape: Tape) -> "Probabilities":
        """Softmax images recorded on ``tape`` (rows of M, and each p)."""
        M = {}
        for k, t in self.m_aux.items():
            leaves = tape.watch(t)
            M[k] = [engine.softmax(list(row)) for row in leaves]
        p = [engine.softmax(list(tape.watch(t))) for t in self.p_aux]
        return Probabilities(M, p)


def _softmax_np(row) -> list[float]:
    row = np.asarray(row, dtype=float)
    e = np.exp(row - row.max())
    return (e / e.sum()).tolist()


@dataclass
class Probabilities:
    """Derived interconnection matrices and implementation vectors (Var or float)."""

    M: dict[tuple[int, int], list[list]]
    p: list[list]

    def values(self) -> "Probabilities":
        return Probabilities(
            {k: [[value(x) for x in row] for row in m] for k, m in self.M.items()},
            [[value(x) for x in pc] for pc in self.p],
        )


@dataclass
class TimingState:
    """Per-signal timing of one evaluation, keyed by (column, stage)."""

    at: dict[tuple[int, int], list]
    slew: dict[tuple[int, int], list]
    load: dict[tuple[int, int], list]
    slot_cap: dict[tuple[int, int], list]
    outputs: list[tuple[int, int]]
    output_at: list
    slack: list = field(default_factory=list)
    wns: object = None
    tns: object = None
    rat: float = 0.0

    def report(self) -> dict:
        return {
            "outputs": [
                {"column": i, "bit": u, "at": value(a), "slack": value(s)}
                for (i, u), a, s in zip(self.outputs, self.output_at, self.slack)
            ],
            "wns": value(self.wns),
            "tns": value(self.tns),
            "rat": self.rat,
        }


class TimingModel:
    """Static per-tree lookup structures shared by every evaluation."""

    def __init__(self, model: SlotModel, impls: ImplSet):
        self.model = model
        self.impls = impls
        self.comp_impls = [impls[c.kind] for c in model.compressors]
        # caps[c][port] -> list over implementations
        self.caps = [
            [[impl.cap(port) for impl in self.comp_impls[c.index]] for port in c.ports]
            for c in model.compressors
        ]
        # luts[c][port][out] -> list over implementations of (delay lut, slew lut)
        self.luts = []
        for c in model.compressors:
            per_port = []
            for port in c.ports:
                per_out = []
                for out in ("sum", "carry"):
                    per_out.append([impl.luts()[(port, out)] for impl in self.comp_impls[c.index]])
                per_port.append(per_out)
            self.luts.append(per_port)
        self.depth = model.n_stages

    def max_fanin(self) -> int:
        return max((len(c.ports) for c in self.model.compressors), default=1)


def expected_luts(pc: Sequence, luts: Sequence, slew, load):
    """Probability-weighted delay and slew of one arc over implementations."""
    s = value(slew)
    L = value(load)
    dv = sv = ds_d = dl_d = ds_s = dl_s = 0.0
    d_vals, s_vals = [], []
    for w, (dl, sl) in zip(pc, luts):
        wv = value(w)
        a, a_s, a_l = lut_eval_grad(dl, s, L)
        b, b_s, b_l = lut_eval_grad(sl, s, L)
        d_vals.append(a)
        s_vals.append(b)
        dv += wv * a
        sv += wv * b
        ds_d += wv * a_s
        dl_d += wv * a_l
        ds_s += wv * b_s
        dl_s += wv * b_l
    args = list(pc) + [slew, load]
    delay = combine(dv, args, d_vals + [ds_d, dl_d])
    out_slew = combine(sv, args, s_vals + [ds_s, dl_s])
    return delay, out_slew


def _smax(xs, gamma: float, hard: bool):
    return hardmax(xs) if hard else lse(xs, gamma)


def _lse_of_sums(a: Sequence, b: Sequence, gamma: float, hard: bool):
    """smooth/hard max of a[k] + b[k] as a single node."""
    vals = [value(x) + value(y) for x, y in zip(a, b)]
    if hard:
        k = max(range(len(vals)), key=vals.__getitem__)
        return combine(vals[k], [a[k], b[k]], [1.0, 1.0])
    m = max(vals)
    ex = [math.exp((v - m) / gamma) for v in vals]
    s = sum(ex)
    w = [e / s for e in ex]
    return combine(m + gamma * math.log(s), list(a) + list(b), w + w)


def expected_caps(tm: TimingModel, probs: Probabilities, cond: Conditions, include_inputs: bool = True):
    """Backward pass of expected input capacitances and driver loads.

    Returns ``(slot_cap, load)`` keyed by (column, stage).
    """
    model = tm.model
    S = model.n_stages
    load: dict[tuple[int, int], list] = {}
    slot_cap: dict[tuple[int, int], list] = {}
    for cell in model.stage_cells(S):
        load[(cell.column, S)] = [cond.output_load] * cell.size
    for j in range(S - 1, -1 if include_inputs else 0, -1):
        for cell in model.stage_cells(j):
            i = cell.column
            nxt = load.get((i, j + 1), [])
            caps = []
            for v, (c, port) in enumerate(cell.slots):
                if c < 0:
                    caps.append(nxt[cell.pass_dest[v]])
                else:
                    caps.append(dot(probs.p[c], tm.caps[c][port]))
            slot_cap[(i, j)] = caps
            M = probs.M[(i, j)]
            load[(i, j)] = [dot(M[u], caps) for u in range(cell.size)]
    return slot_cap, load


def propagate(tm: TimingModel, probs: Probabilities, cond: Conditions, hard: bool = False) -> TimingState:
    """Forward expected arrival-time / slew propagation, stage by stage."""
    model = tm.model
    S = model.n_stages
    gamma = cond.gamma
    slot_cap, load = expected_caps(tm, probs, cond, include_inputs=False)
    at: dict[tuple[int, int], list] = {}
    slew: dict[tuple[int, int], list] = {}
    for cell in model.stage_cells(0):
        at[(cell.column, 0)] = [cond.at_of(ref) for _, ref in cell.signals]
        slew[(cell.column, 0)] = [cond.slew_of(ref) for _, ref in cell.signals]
    for j in range(S):
        nxt_at: dict[int, dict[int, object]] = {}
        nxt_slew: dict[int, dict[int, object]] = {}
        for cell in model.stage_cells(j):
            i = cell.column
            M = probs.M[(i, j)]
            a_in = at[(i, j)]
            s_in = slew[(i, j)]
            l = cell.size
            slot_at = []
            slot_slew = []
            for v in range(l):
                col = [M[u][v] for u in range(l)]
                slot_at.append(dot(col, a_in))
                slot_slew.append(dot(col, s_in))
            for v, (c, _) in enumerate(cell.slots):
                if c < 0:
                    d = cell.pass_dest[v]
                    nxt_at.setdefault(i, {})[d] = slot_at[v]
                    nxt_slew.setdefault(i, {})[d] = slot_slew[v]
            for comp in model.compressors_at(i, j):
                c = comp.index
                ports = range(comp.slot_offset, comp.slot_offset + len(comp.ports))
                for o, (col_o, u_o) in enumerate(tm.model.dests[c]):
                    L = load[(col_o, j + 1)][u_o]
                    delays, slews = [], []
                    for q, v in enumerate(ports):
                        d, s = expected_luts(probs.p[c], tm.luts[c][q][o], slot_slew[v], L)
                        delays.append(d)
                        slews.append(s)
                    nxt_at.setdefault(col_o, {})[u_o] = _lse_of_sums([slot_at[v] for v in ports], delays, gamma, hard)
                    nxt_slew.setdefault(col_o, {})[u_o] = _smax(slews, gamma, hard)
        for col, entries in nxt_at.items():
            at[(col, j + 1)] = [entries[u] for u in range(len(entries))]
            slew[(col, j + 1)] = [nxt_slew[col][u] for u in range(len(entries))]
    outputs = model.outputs()
    output_at = [at[(i, S)][u] for i, u in outputs]
    return TimingState(at, slew, load, slot_cap, outputs, output_at)


def slacks(state: TimingState, rat: float, gamma: float, hard: bool = False):
    """Slack per output, then WNS (smooth max of violations) and TNS (sum).

    Violation of an output is ``-min(0, slack)``: nonnegative, zero when met.
    """
    state.rat = rat
    state.slack = [rat - a for a in state.output_at]
    neg = [-min0(s) for s in state.slack]
    state.wns = _smax(neg, gamma, hard)
    state.tns = vsum(neg)
    return state.wns, state.tns


def analyze(tm: TimingModel, probs: Probabilities, cond: Conditions, hard: bool = False) -> TimingState:
    state = propagate(tm, probs, cond, hard)
    slacks(state, cond.rat, cond.gamma, hard)
    return state
