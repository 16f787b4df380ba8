"""Partial-product arrays, Dadda/Wallace compressor assignment and slot model.

Conventions
-----------
Column ``i`` holds bits of weight ``2**i``. Stage ``j`` consumes the bits
present at stage ``j`` and produces stage ``j + 1``: sums stay in column
``i``, carries land in column ``i + 1``. Within a (column, stage) cell the
C32 compressors come first, then the C22 compressors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

PORTS = {"C32": ("a", "b", "cin"), "C22": ("a", "b")}


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class PPArray:
    width_a: int
    width_b: int
    acc_width: int
    heights: tuple[int, ...]

    @property
    def total_bits(self) -> int:
        return sum(self.heights)

    def column_bits(self, i: int) -> list[tuple]:
        """Canonical order of the initial bits of column ``i``.

        ``("pp", x, y)`` is ``a[x] & b[y]`` with ``x + y == i`` (x ascending),
        followed by ``("acc", i)`` for the accumulator bit.
        """
        bits = [("pp", x, i - x) for x in range(self.width_a) if 0 <= i - x < self.width_b]
        if i < self.acc_width:
            bits.append(("acc", i))
        return bits

    def bits(self) -> list[tuple]:
        return [b for i in range(len(self.heights)) for b in self.column_bits(i)]


def build_pp_array(width_a: int, width_b: int, acc_width: int = 0) -> PPArray:
    """AND-array partial products, plus one accumulator bit per low column."""
    if width_a < 2 or width_b < 2:
        raise ValueError("operand widths must be >= 2")
    if acc_width < 0 or acc_width > width_a + width_b:
        raise ValueError("acc_width must be in [0, width_a + width_b]")
    ncols = max(width_a + width_b - 1, acc_width)
    heights = []
    for i in range(ncols):
        h = max(0, min(i + 1, width_a, width_b, width_a + width_b - 1 - i))
        heights.append(h + (1 if i < acc_width else 0))
    return PPArray(width_a, width_b, acc_width, tuple(heights))


@dataclass(frozen=True)
class StageAssignment:
    """Compressor counts per (stage, column) and the resulting heights.

    ``counts[j][i] == (n32, n22)``; ``heights[j][i]`` is the number of bits
    entering stage ``j`` at column ``i``; ``heights[-1]`` are the final rows.
    """

    counts: tuple[tuple[tuple[int, int], ...], ...]
    heights: tuple[tuple[int, ...], ...]

    @property
    def n_stages(self) -> int:
        return len(self.counts)

    @property
    def n_columns(self) -> int:
        return len(self.heights[0])

    def totals(self) -> tuple[int, int]:
        n32 = sum(c[0] for row in self.counts for c in row)
        n22 = sum(c[1] for row in self.counts for c in row)
        return n32, n22

    def validate(self) -> None:
        for j, row in enumerate(self.counts):
            for i, (n32, n22) in enumerate(row):
                l = self.heights[j][i]
                if n32 < 0 or n22 < 0 or 3 * n32 + 2 * n22 > l:
                    raise StructureError(f"stage {j} column {i}: consumes more than {l} bits")
                carries = sum(row[i - 1]) if i > 0 else 0
                expect = l - 2 * n32 - n22 + carries
                if self.heights[j + 1][i] != expect:
                    raise StructureError(f"stage {j} column {i}: bit conservation violated")
            if sum(row[-1]) > 0:
                raise StructureError(f"stage {j}: carry out of the last column")
        if any(h > 2 for h in self.heights[-1]):
            raise StructureError("final stage has a column taller than 2")


def _next_heights(h: list[int], row: list[tuple[int, int]]) -> list[int]:
    nxt = []
    for i, (n32, n22) in enumerate(row):
        carries = sum(row[i - 1]) if i > 0 else 0
        nxt.append(h[i] - 2 * n32 - n22 + carries)
    return nxt


def _finish(heights0: list[int], rows: list[list[tuple[int, int]]]) -> StageAssignment:
    ncols = len(heights0)
    for row in rows:
        ncols = max(ncols, len(row) + (1 if sum(row[-1]) else 0))
    rows = [row + [(0, 0)] * (ncols - len(row)) for row in rows]
    hs = [list(heights0) + [0] * (ncols - len(heights0))]
    for row in rows:
        hs.append(_next_heights(hs[-1], row))
    sa = StageAssignment(tuple(tuple(r) for r in rows), tuple(tuple(h) for h in hs))
    sa.validate()
    return sa


def dadda_targets(max_height: int) -> list[int]:
    """Descending stage targets d_k < max_height of 2, 3, 4, 6, 9, 13, ..."""
    seq = [2]
    while seq[-1] < max_height:
        seq.append(seq[-1] * 3 // 2)
    return [d for d in reversed(seq) if d < max_height]


def _reduce_stage(h: list[int], rule) -> list[tuple[int, int]]:
    """Apply ``rule(height, carries_in) -> (n32, n22)`` left to right,
    growing ``h`` by a column when the top column emits carries."""
    row = []
    carries_in = 0
    i = 0
    while i < len(h):
        n32, n22 = rule(i, h[i], carries_in)
        if 3 * n32 + 2 * n22 > h[i]:
            raise StructureError(f"column {i}: {n32} C32 + {n22} C22 exceed height {h[i]}")
        row.append((n32, n22))
        carries_in = n32 + n22
        if i == len(h) - 1 and carries_in:
            h.append(0)
        i += 1
    return row


def dadda_assignment(pp: PPArray) -> StageAssignment:
    h = list(pp.heights)
    rows = []
    for target in dadda_targets(max(h)):
        def rule(i, hi, cin, target=target):
            excess = hi + cin - target
            return (excess // 2, excess % 2) if excess > 0 else (0, 0)

        row = _reduce_stage(h, rule)
        rows.append(row)
        h = _next_heights(h, row)
    return _finish(list(pp.heights), rows)


def wallace_assignment(pp: PPArray) -> StageAssignment:
    """Column-count emulation of Wallace's row grouping: full adders on
    every group of three bits, a half adder on a two-bit remainder."""
    h = list(pp.heights)
    rows = []
    while max(h) > 2:
        row = _reduce_stage(h, lambda i, hi, cin: (hi // 3, 1 if hi % 3 == 2 else 0))
        rows.append(row)
        h = _next_heights(h, row)
    return _finish(list(pp.heights), rows)


@dataclass(frozen=True)
class Compressor:
    index: int
    stage: int
    column: int
    kind: str  # "C32" | "C22"
    slot_offset: int  # first slot index within its (column, stage) cell

    @property
    def ports(self) -> tuple[str, ...]:
        return PORTS[self.kind]


@dataclass
class Cell:
    """One (column, stage) position of the tree."""

    column: int
    stage: int
    # slot v -> (compressor index, port index) or (-1, passthrough ordinal)
    slots: list[tuple[int, int]] = field(default_factory=list)
    # signal u -> ("in", bit index) | ("sum", c) | ("carry", c) | ("pass", slot in previous stage)
    signals: list[tuple[str, int]] = field(default_factory=list)
    # slot v (passthrough) -> signal index at (column, stage + 1)
    pass_dest: dict[int, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.signals)


@dataclass
class SlotModel:
    pp: PPArray
    assignment: StageAssignment
    compressors: list[Compressor]
    cells: dict[tuple[int, int], Cell]  # keyed (column, stage); stage == n_stages holds outputs
    # compressor index -> ((column, signal index of sum), (column, signal index of carry)) at stage + 1
    dests: list[tuple[tuple[int, int], tuple[int, int]]]
    _by_cell: dict | None = field(default=None, repr=False, compare=False)

    @property
    def n_stages(self) -> int:
        return self.assignment.n_stages

    @property
    def n_columns(self) -> int:
        return self.assignment.n_columns

    def stage_cells(self, j: int) -> Iterator[Cell]:
        for i in range(self.n_columns):
            cell = self.cells.get((i, j))
            if cell is not None and cell.size:
                yield cell

    def matrix_keys(self) -> list[tuple[int, int]]:
        """(column, stage) of every interconnection matrix, stage-major."""
        return [(c.column, c.stage) for j in range(self.n_stages) for c in self.stage_cells(j)]

    def outputs(self) -> list[tuple[int, int]]:
        """(column, signal index) of every final-row bit."""
        return [(c.column, u) for c in self.stage_cells(self.n_stages) for u in range(c.size)]

    def compressors_at(self, i: int, j: int) -> list[Compressor]:
        if self._by_cell is None:
            self._by_cell = {}
            for c in self.compressors:
                self._by_cell.setdefault((c.column, c.stage), []).append(c)
        return self._by_cell.get((i, j), [])

    def to_dict(self) -> dict:
        return {
            "width_a": self.pp.width_a,
            "width_b": self.pp.width_b,
            "acc_width": self.pp.acc_width,
            "counts": [[list(c) for c in row] for row in self.assignment.counts],
            "heights": [list(h) for h in self.assignment.heights],
            "slots": {f"{i},{j}": [list(s) for s in cell.slots] for (i, j), cell in sorted(self.cells.items())},
            "signals": {f"{i},{j}": [list(s) for s in cell.signals] for (i, j), cell in sorted(self.cells.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlotModel":
        pp = build_pp_array(d["width_a"], d["width_b"], d["acc_width"])
        counts = [[tuple(c) for c in row] for row in d["counts"]]
        sa = _finish(list(pp.heights), counts)
        if [list(h) for h in sa.heights] != d["heights"]:
            raise StructureError("stored heights disagree with stage counts")
        model = slot_model(pp, sa)
        stored = model.to_dict()
        if stored["slots"] != d["slots"] or stored["signals"] != d["signals"]:
            raise StructureError("stored slot/signal order disagrees with the canonical order")
        return model


def slot_model(pp: PPArray, sa: StageAssignment) -> SlotModel:
    """Canonical slot and signal ordering for every (column, stage)."""
    sa.validate()
    if tuple(sa.heights[0][: len(pp.heights)]) != pp.heights or any(sa.heights[0][len(pp.heights):]):
        raise StructureError("stage assignment does not start from the partial-product heights")
    ncols = sa.n_columns
    cells: dict[tuple[int, int], Cell] = {}
    signals = []
    k = 0
    for i in range(ncols):
        col = []
        for _ in pp.column_bits(i) if i < len(pp.heights) else []:
            col.append(("in", k))
            k += 1
        signals.append(col)
    compressors: list[Compressor] = []
    dests: list = []
    for j in range(sa.n_stages):
        nxt_sums: list[list] = [[] for _ in range(ncols)]
        nxt_carries: list[list] = [[] for _ in range(ncols)]
        nxt_pass: list[list] = [[] for _ in range(ncols)]
        stage_cells = []
        for i in range(ncols):
            l = sa.heights[j][i]
            if len(signals[i]) != l:
                raise StructureError(f"stage {j} column {i}: {len(signals[i])} signals for height {l}")
            n32, n22 = sa.counts[j][i]
            cell = Cell(i, j, signals=signals[i])
            for kind, n in (("C32", n32), ("C22", n22)):
                for _ in range(n):
                    c = Compressor(len(compressors), j, i, kind, len(cell.slots))
                    compressors.append(c)
                    dests.append(None)
                    cell.slots.extend((c.index, p) for p in range(len(PORTS[kind])))
                    nxt_sums[i].append(c.index)
                    if i + 1 >= ncols:
                        raise StructureError(f"stage {j}: carry out of the last column")
                    nxt_carries[i + 1].append(c.index)
            for p in range(l - len(cell.slots)):
                nxt_pass[i].append(len(cell.slots))
                cell.slots.append((-1, p))
            if len(cell.slots) != l:
                raise StructureError(f"stage {j} column {i}: {len(cell.slots)} slots for {l} signals")
            stage_cells.append(cell)
        new_signals = []
        for i in range(ncols):
            col = [("sum", c) for c in nxt_sums[i]] + [("carry", c) for c in nxt_carries[i]]
            for v in nxt_pass[i]:
                stage_cells[i].pass_dest[v] = len(col)
                col.append(("pass", v))
            new_signals.append(col)
        for i in range(ncols):
            for u, (tag, c) in enumerate(new_signals[i]):
                if tag == "sum":
                    dests[c] = ((i, u), None)
                elif tag == "carry":
                    dests[c] = (dests[c][0], (i, u))
        for cell in stage_cells:
            cells[(cell.column, cell.stage)] = cell
        signals = new_signals
    for i in range(ncols):
        cells[(i, sa.n_stages)] = Cell(i, sa.n_stages, signals=signals[i])
    return SlotModel(pp, sa, compressors, cells, dests)


def build_tree(width_a: int, width_b: int, acc_width: int = 0, family: str = "dadda") -> SlotModel:
    pp = build_pp_array(width_a, width_b, acc_width)
    if family == "dadda":
        sa = dadda_assignment(pp)
    elif family == "wallace":
        sa = wallace_assignment(pp)
    else:
        raise ValueError(f"unknown family {family!r}")
    return slot_model(pp, sa)


def column_values(model: SlotModel, a: np.ndarray, b: np.ndarray, c: np.ndarray | None,
                  perms: dict[tuple[int, int], list[int]] | None = None) -> list[list[list[np.ndarray]]]:
    """Bit-level reference evaluation of the tree, stage by stage.

    Returns ``vals[j][i]`` = list of boolean lanes of the signals at
    (column i, stage j). ``perms[(i, j)][u]`` is the slot of signal ``u``
    (identity when omitted). Used to check arithmetic invariants.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    c = np.zeros_like(a) if c is None else np.asarray(c, dtype=np.int64)
    flat = []
    for bit in model.pp.bits():
        if bit[0] == "pp":
            flat.append(((a >> bit[1]) & 1 & (b >> bit[2])).astype(bool))
        else:
            flat.append(((c >> bit[1]) & 1).astype(bool))
    ncols = model.n_columns
    cur = [[flat[idx] for _, idx in model.cells[(i, 0)].signals] for i in range(ncols)]
    out = [cur]
    for j in range(model.n_stages):
        comp_in: dict[int, list] = {}
        pass_out: dict[tuple[int, int], np.ndarray] = {}
        for i in range(ncols):
            cell = model.cells[(i, j)]
            perm = (perms or {}).get((i, j)) or list(range(cell.size))
            by_slot = [None] * cell.size
            for u, v in enumerate(perm):
                by_slot[v] = cur[i][u]
            for v, (ci, p) in enumerate(cell.slots):
                if ci < 0:
                    pass_out[(i, v)] = by_slot[v]
                else:
                    comp_in.setdefault(ci, [None] * len(model.compressors[ci].ports))[p] = by_slot[v]
        nxt = []
        for i in range(ncols):
            col = []
            for tag, ref in model.cells[(i, j + 1)].signals:
                if tag == "pass":
                    col.append(pass_out[(i, ref)])
                else:
                    total = sum(x.astype(np.int64) for x in comp_in[ref])
                    col.append(((total & 1) if tag == "sum" else (total >> 1)).astype(bool))
            nxt.append(col)
        cur = nxt
        out.append(cur)
    return out
