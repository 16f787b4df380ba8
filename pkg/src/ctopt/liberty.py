"""Liberty (.lib) subset parser with NLDM lookup tables.

Only the attributes needed for combinational delay modelling are kept:
cell area, input pin capacitance, output pin function and the
``cell_rise``/``cell_fall``/``rise_transition``/``fall_transition`` tables
of each timing group. All times are normalized to ns and all
capacitances to fF while parsing.
"""
from __future__ import annotations

import logging
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import boolexpr

log = logging.getLogger(__name__)

__all__ = [
    "Lut2D",
    "Arc",
    "LibraryCell",
    "TimingLibrary",
    "LibertyParseError",
    "LibertyUnitError",
    "parse_liberty",
    "read_liberty",
    "write_liberty",
    "lut_eval",
    "lut_eval_grad",
    "resample",
    "worst_case_arcs",
]


class LibertyParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class LibertyUnitError(LibertyParseError):
    pass


@dataclass(frozen=True)
class Lut2D:
    """NLDM table indexed by input slew (ns) and output load (fF)."""

    slew_axis: tuple[float, ...]
    load_axis: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        for name in ("slew_axis", "load_axis"):
            axis = getattr(self, name)
            if len(axis) < 2:
                raise ValueError(f"{name} needs at least 2 breakpoints")
            if any(b <= a for a, b in zip(axis, axis[1:])):
                raise ValueError(f"{name} must be strictly ascending")
        if len(self.values) != len(self.slew_axis) or any(
            len(row) != len(self.load_axis) for row in self.values
        ):
            raise ValueError("values shape does not match axes")

    @classmethod
    def from_arrays(cls, slew_axis, load_axis, values) -> "Lut2D":
        return cls(
            tuple(float(x) for x in slew_axis),
            tuple(float(x) for x in load_axis),
            tuple(tuple(float(v) for v in row) for row in np.asarray(values, dtype=float)),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.slew_axis), len(self.load_axis)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def to_dict(self) -> dict:
        return {
            "slew_axis": list(self.slew_axis),
            "load_axis": list(self.load_axis),
            "values": [list(r) for r in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Lut2D":
        return cls.from_arrays(d["slew_axis"], d["load_axis"], d["values"])


def _interval(axis: tuple[float, ...], x: float) -> int:
    # patch on the increasing side at breakpoints; boundary patch outside the grid
    k = bisect_right(axis, x) - 1
    if k < 0:
        return 0
    n = len(axis) - 2
    return n if k > n else k


def lut_eval_grad(lut: Lut2D, slew: float, load: float) -> tuple[float, float, float]:
    """Bilinear value and its partial derivatives w.r.t. slew and load."""
    i = _interval(lut.slew_axis, slew)
    j = _interval(lut.load_axis, load)
    x0, x1 = lut.slew_axis[i], lut.slew_axis[i + 1]
    y0, y1 = lut.load_axis[j], lut.load_axis[j + 1]
    r0, r1 = lut.values[i], lut.values[i + 1]
    v00, v01, v10, v11 = r0[j], r0[j + 1], r1[j], r1[j + 1]
    dx = x1 - x0
    dy = y1 - y0
    tx = (slew - x0) / dx
    ty = (load - y0) / dy
    ux = 1.0 - tx
    uy = 1.0 - ty
    value = ux * uy * v00 + tx * uy * v10 + ux * ty * v01 + tx * ty * v11
    d_slew = (uy * (v10 - v00) + ty * (v11 - v01)) / dx
    d_load = (ux * (v01 - v00) + tx * (v11 - v10)) / dy
    return value, d_slew, d_load


def lut_eval(lut: Lut2D, slew: float, load: float) -> float:
    """Bilinear interpolation, or extrapolation from the nearest boundary patch."""
    return lut_eval_grad(lut, slew, load)[0]


def resample(lut: Lut2D, slew_axis: Iterable[float], load_axis: Iterable[float]) -> Lut2D:
    slew_axis = tuple(slew_axis)
    load_axis = tuple(load_axis)
    return Lut2D(
        slew_axis,
        load_axis,
        tuple(tuple(lut_eval(lut, s, c) for c in load_axis) for s in slew_axis),
    )


@dataclass(frozen=True)
class Arc:
    input_pin: str
    output_pin: str
    edge: str  # "rise" | "fall"
    delay: Lut2D
    slew: Lut2D
    when: str | None = None


@dataclass(frozen=True)
class LibraryCell:
    name: str
    area: float
    input_pins: tuple[tuple[str, float], ...]
    output_pins: tuple[str, ...]
    arcs: tuple[Arc, ...]
    functions: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if self.area <= 0:
            raise ValueError(f"{self.name}: area must be positive")
        inputs = {p for p, _ in self.input_pins}
        for pin, cap in self.input_pins:
            if cap <= 0:
                raise ValueError(f"{self.name}.{pin}: capacitance must be positive")
        fn_pins = {p for p, _ in self.functions}
        for out in self.output_pins:
            if out not in fn_pins:
                raise ValueError(f"{self.name}.{out}: missing function")
        for arc in self.arcs:
            if arc.input_pin not in inputs or arc.output_pin not in self.output_pins:
                raise ValueError(f"{self.name}: arc {arc.input_pin}->{arc.output_pin} references unknown pin")

    def pin_cap(self, pin: str) -> float:
        for p, c in self.input_pins:
            if p == pin:
                return c
        raise KeyError(f"{self.name} has no input pin {pin}")

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.input_pins)

    def function(self, pin: str) -> str:
        return dict(self.functions)[pin]


@dataclass(frozen=True)
class Warning_:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


@dataclass
class TimingLibrary:
    name: str
    cells: dict[str, LibraryCell]
    time_unit: str = "1ns"
    cap_unit: str = "1ff"
    warnings: list[Warning_] = field(default_factory=list, compare=False, repr=False)

    def cell(self, name: str) -> LibraryCell:
        try:
            return self.cells[name]
        except KeyError:
            raise KeyError(f"cell {name!r} not in library {self.name!r}") from None


# ---------------------------------------------------------------------------
# tokenizer / generic group tree

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+|\\\n)
  | (?P<nl>\n)
  | (?P<comment>/\*.*?\*/|//[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>[{}():;,])
  | (?P<word>[^\s{}():;,"]+)
    """,
    re.VERBOSE | re.DOTALL,
)


def _tokenize(text: str):
    line = 1
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LibertyParseError(f"unexpected character {text[pos]!r}", line)
        kind = m.lastgroup
        tok = m.group()
        if kind == "string":
            out.append(("string", tok[1:-1].replace("\\\n", ""), line))
        elif kind in ("punct", "word"):
            out.append((kind, tok, line))
        line += tok.count("\n")
        pos = m.end()
    return out


@dataclass
class _Group:
    kind: str
    args: list[str]
    line: int
    attrs: list[tuple[str, object, int]] = field(default_factory=list)
    groups: list["_Group"] = field(default_factory=list)

    def attr(self, name, default=None):
        for n, v, _ in self.attrs:
            if n == name:
                return v
        return default

    def attr_line(self, name):
        for n, _, ln in self.attrs:
            if n == name:
                return ln
        return self.line

    def children(self, kind):
        return [g for g in self.groups if g.kind == kind]


class _TreeParser:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0

    def _peek(self, off=0):
        i = self.pos + off
        return self.toks[i] if i < len(self.toks) else None

    def _next(self):
        tok = self._peek()
        if tok is None:
            last = self.toks[-1][2] if self.toks else 1
            raise LibertyParseError("unexpected end of file (unbalanced braces?)", last)
        self.pos += 1
        return tok

    def _expect(self, text):
        tok = self._next()
        if tok[1] != text or tok[0] == "string":
            raise LibertyParseError(f"expected {text!r}, got {tok[1]!r}", tok[2])
        return tok

    def parse(self) -> _Group:
        root = _Group("<root>", [], 1)
        self._body(root, top=True)
        return root

    def _body(self, group, top=False):
        while True:
            tok = self._peek()
            if tok is None:
                if top:
                    return
                raise LibertyParseError(f"unbalanced braces: group {group.kind!r} not closed", group.line)
            if tok[1] == "}" and tok[0] == "punct":
                if top:
                    raise LibertyParseError("unbalanced braces: unexpected '}'", tok[2])
                self.pos += 1
                return
            if tok[1] == ";" and tok[0] == "punct":
                self.pos += 1
                continue
            self._statement(group)

    def _statement(self, group):
        kind, name, line = self._next()
        if kind != "word":
            raise LibertyParseError(f"unexpected {name!r}", line)
        tok = self._next()
        if tok[1] == ":" and tok[0] == "punct":
            parts = []
            while True:
                t = self._peek()
                if t is None or (t[0] == "punct" and t[1] in ";}") or (t[2] != line and parts):
                    break
                if t[0] == "punct":
                    raise LibertyParseError(f"unexpected {t[1]!r} in attribute {name}", t[2])
                parts.append(t[1])
                self.pos += 1
            if not parts:
                raise LibertyParseError(f"attribute {name} has no value", line)
            if self._peek() is not None and self._peek()[1] == ";":
                self.pos += 1
            group.attrs.append((name, " ".join(parts), line))
            return
        if tok[1] != "(" or tok[0] != "punct":
            raise LibertyParseError(f"expected ':' or '(' after {name!r}", tok[2])
        args = []
        while True:
            t = self._next()
            if t[0] == "punct" and t[1] == ")":
                break
            if t[0] == "punct" and t[1] == ",":
                continue
            if t[0] == "punct":
                raise LibertyParseError(f"unexpected {t[1]!r} in arguments of {name}", t[2])
            args.append(t[1])
        t = self._peek()
        if t is not None and t[0] == "punct" and t[1] == "{":
            self.pos += 1
            sub = _Group(name, args, line)
            self._body(sub)
            group.groups.append(sub)
        else:
            group.attrs.append((name, args, line))


# ---------------------------------------------------------------------------
# interpretation

_TIME_UNITS = {"ps": 1e-3, "ns": 1.0, "us": 1e3}
_CAP_UNITS = {"ff": 1.0, "pf": 1e3}


def _time_scale(text: str, line: int) -> float:
    m = re.fullmatch(r"\s*([0-9.eE+-]*)\s*([a-zA-Z]+)\s*", text)
    if not m or m.group(2).lower() not in _TIME_UNITS:
        raise LibertyUnitError(f"unknown time unit {text!r}", line)
    mag = float(m.group(1)) if m.group(1) else 1.0
    return mag * _TIME_UNITS[m.group(2).lower()]


def _cap_scale(args, line: int) -> float:
    if len(args) != 2 or args[1].lower() not in _CAP_UNITS:
        raise LibertyUnitError(f"unknown capacitive load unit {args!r}", line)
    try:
        mag = float(args[0])
    except ValueError:
        raise LibertyUnitError(f"bad capacitive load unit magnitude {args[0]!r}", line) from None
    return mag * _CAP_UNITS[args[1].lower()]


def _numbers(args, line: int) -> list[float]:
    out = []
    for a in args:
        for piece in a.replace("\\\n", " ").split(","):
            piece = piece.strip()
            if not piece:
                continue
            try:
                out.append(float(piece))
            except ValueError:
                raise LibertyParseError(f"malformed numeric list entry {piece!r}", line) from None
    return out


def _number(v, line, what):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise LibertyParseError(f"malformed number for {what}: {v!r}", line) from None


class _Builder:
    def __init__(self):
        self.warnings: list[Warning_] = []

    def warn(self, line, msg):
        self.warnings.append(Warning_(line, msg))
        log.warning("liberty line %d: %s", line, msg)

    def table(self, g: _Group, templates, tscale, cscale) -> Lut2D | None:
        tmpl = templates.get(g.args[0]) if g.args else None
        i1 = g.attr("index_1")
        i2 = g.attr("index_2")
        vals = g.attr("values")
        if vals is None:
            raise LibertyParseError(f"table {g.kind} without values", g.line)
        axis1 = _numbers(i1, g.attr_line("index_1")) if i1 is not None else (tmpl or {}).get("index_1")
        axis2 = _numbers(i2, g.attr_line("index_2")) if i2 is not None else (tmpl or {}).get("index_2")
        order = (tmpl or {}).get("vars", ("input_net_transition", "total_output_net_capacitance"))
        rows = [_numbers([v], g.attr_line("values")) for v in vals]
        if not axis1 or not axis2:
            self.warn(g.line, f"{g.kind}: one-dimensional or unindexed table skipped")
            return None
        if len(rows) != len(axis1) or any(len(r) != len(axis2) for r in rows):
            raise LibertyParseError(f"{g.kind}: values shape does not match index_1/index_2", g.attr_line("values"))
        arr = np.array(rows, dtype=float)
        if order[0] == "total_output_net_capacitance":
            axis1, axis2 = axis2, axis1
            arr = arr.T
        elif order[0] != "input_net_transition":
            self.warn(g.line, f"{g.kind}: unsupported table variables {order}")
            return None
        try:
            return Lut2D.from_arrays(np.array(axis1) * tscale, np.array(axis2) * cscale, arr * tscale)
        except ValueError as exc:
            self.warn(g.line, f"{g.kind}: {exc}")
            return None

    def cell(self, g: _Group, templates, tscale, cscale) -> LibraryCell | None:
        name = g.args[0] if g.args else "<anonymous>"
        if g.children("ff") or g.children("latch") or g.children("statetable"):
            self.warn(g.line, f"cell {name}: sequential cell skipped")
            return None
        area = g.attr("area")
        if area is None:
            self.warn(g.line, f"cell {name}: no area, dropped")
            return None
        area = _number(area, g.attr_line("area"), "area")
        inputs: list[tuple[str, float]] = []
        outputs: list[str] = []
        functions: list[tuple[str, str]] = []
        arcs: list[Arc] = []
        pin_groups = g.children("pin")
        if not pin_groups:
            self.warn(g.line, f"cell {name}: no pins, dropped")
            return None
        for pg in pin_groups:
            direction = str(pg.attr("direction", "")).strip()
            for pin in pg.args:
                if direction == "input":
                    cap = pg.attr("capacitance")
                    if cap is None:
                        self.warn(pg.line, f"cell {name}: input pin {pin} has no capacitance, dropped")
                        return None
                    inputs.append((pin, _number(cap, pg.attr_line("capacitance"), "capacitance") * cscale))
                elif direction == "output":
                    fn = pg.attr("function")
                    if fn is None:
                        self.warn(pg.line, f"cell {name}: output pin {pin} has no function, dropped")
                        return None
                    try:
                        ast = boolexpr.parse_expr(fn)
                    except boolexpr.ExpressionError as exc:
                        raise LibertyParseError(f"cell {name} pin {pin}: {exc}", pg.attr_line("function")) from None
                    outputs.append(pin)
                    functions.append((pin, boolexpr.to_string(ast)))
                    for tg in pg.children("timing"):
                        arcs.extend(self.arcs(name, pin, tg, templates, tscale, cscale))
                else:
                    self.warn(pg.line, f"cell {name}: pin {pin} with direction {direction!r} ignored")
        if not outputs:
            self.warn(g.line, f"cell {name}: no output pins, dropped")
            return None
        try:
            return LibraryCell(name, area, tuple(inputs), tuple(outputs), tuple(arcs), tuple(functions))
        except ValueError as exc:
            self.warn(g.line, f"cell {name}: {exc}; dropped")
            return None

    def arcs(self, cell, out, tg: _Group, templates, tscale, cscale):
        ttype = str(tg.attr("timing_type", "combinational")).strip()
        if ttype not in ("combinational", "combinational_rise", "combinational_fall"):
            self.warn(tg.line, f"cell {cell}: timing_type {ttype} skipped")
            return []
        related = tg.attr("related_pin")
        if related is None:
            self.warn(tg.line, f"cell {cell}: timing group without related_pin skipped")
            return []
        when = tg.attr("when")
        tables = {}
        for kind in ("cell_rise", "cell_fall", "rise_transition", "fall_transition"):
            sub = tg.children(kind)
            if sub:
                tables[kind] = self.table(sub[0], templates, tscale, cscale)
        edges = []
        for edge in ("rise", "fall"):
            d = tables.get(f"cell_{edge}")
            s = tables.get(f"{edge}_transition")
            if d is None and s is None:
                continue
            if d is None or s is None:
                self.warn(tg.line, f"cell {cell}: {edge} arc lacks delay or transition table, skipped")
                continue
            edges.append((edge, d, s))
        return [Arc(pin, out, edge, d, s, when) for pin in str(related).split() for edge, d, s in edges]


def parse_liberty(text: str) -> TimingLibrary:
    """Parse Liberty ``text`` into a :class:`TimingLibrary` (ns / fF)."""
    root = _TreeParser(_tokenize(text)).parse()
    libs = root.children("library")
    if len(libs) != 1:
        raise LibertyParseError(f"expected exactly one library group, found {len(libs)}", 1)
    lib = libs[0]
    b = _Builder()
    tu = lib.attr("time_unit")
    if tu is None:
        b.warn(lib.line, "no time_unit, assuming 1ns")
        tscale, tu = 1.0, "1ns"
    else:
        tscale = _time_scale(tu, lib.attr_line("time_unit"))
    cu = lib.attr("capacitive_load_unit")
    if cu is None:
        b.warn(lib.line, "no capacitive_load_unit, assuming 1ff")
        cscale, cu = 1.0, ["1", "ff"]
    else:
        cscale = _cap_scale(cu, lib.attr_line("capacitive_load_unit"))
    templates = {}
    for t in lib.children("lu_table_template"):
        entry = {"vars": (str(t.attr("variable_1", "")).strip(), str(t.attr("variable_2", "")).strip())}
        for idx in ("index_1", "index_2"):
            if t.attr(idx) is not None:
                entry[idx] = _numbers(t.attr(idx), t.attr_line(idx))
        templates[t.args[0] if t.args else ""] = entry
    cells: dict[str, LibraryCell] = {}
    for cg in lib.children("cell"):
        cell = b.cell(cg, templates, tscale, cscale)
        if cell is None:
            continue
        if cell.name in cells:
            b.warn(cg.line, f"duplicate cell {cell.name}, later definition ignored")
            continue
        cells[cell.name] = cell
    name = lib.args[0] if lib.args else "library"
    return TimingLibrary(name, cells, "1ns", "1ff", b.warnings)


def read_liberty(path: str | Path) -> TimingLibrary:
    return parse_liberty(Path(path).read_text())


def _fmt_list(xs) -> str:
    return '"' + ", ".join(repr(float(x)) for x in xs) + '"'


def _write_table(out, kind, lut: Lut2D, pad):
    out.append(f"{pad}{kind} (scalar) {{")
    out.append(f"{pad}  index_1 ({_fmt_list(lut.slew_axis)});")
    out.append(f"{pad}  index_2 ({_fmt_list(lut.load_axis)});")
    rows = ", \\\n".join(f"{pad}    {_fmt_list(r)}" for r in lut.values)
    out.append(f"{pad}  values ( \\\n{rows});")
    out.append(f"{pad}}}")


def write_liberty(lib: TimingLibrary) -> str:
    """Serialize the supported subset back to Liberty text (ns / fF)."""
    out = [
        f"library ({lib.name}) {{",
        "  delay_model : table_lookup;",
        '  time_unit : "1ns";',
        "  capacitive_load_unit (1,ff);",
    ]
    for cell in lib.cells.values():
        out.append(f"  cell ({cell.name}) {{")
        out.append(f"    area : {cell.area!r};")
        for pin, cap in cell.input_pins:
            out.append(f"    pin ({pin}) {{")
            out.append("      direction : input;")
            out.append(f"      capacitance : {cap!r};")
            out.append("    }")
        fns = dict(cell.functions)
        for pin in cell.output_pins:
            out.append(f"    pin ({pin}) {{")
            out.append("      direction : output;")
            out.append(f'      function : "{fns[pin]}";')
            arcs = [a for a in cell.arcs if a.output_pin == pin]
            k = 0
            while k < len(arcs):
                group = [arcs[k]]
                while (
                    k + len(group) < len(arcs)
                    and len(group) < 2
                    and arcs[k + len(group)].input_pin == arcs[k].input_pin
                    and arcs[k + len(group)].when == arcs[k].when
                    and arcs[k + len(group)].edge != arcs[k].edge
                ):
                    group.append(arcs[k + len(group)])
                k += len(group)
                out.append("      timing () {")
                out.append(f'        related_pin : "{group[0].input_pin}";')
                if group[0].when is not None:
                    out.append(f'        when : "{group[0].when}";')
                # parser emits rise before fall for each group
                for arc in sorted(group, key=lambda a: a.edge != "rise"):
                    _write_table(out, f"cell_{arc.edge}", arc.delay, "        ")
                    _write_table(out, f"{arc.edge}_transition", arc.slew, "        ")
                out.append("      }")
            out.append("    }")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


def _union(axes) -> tuple[float, ...]:
    return tuple(sorted(set().union(*map(set, axes))))


def worst_case_arcs(cell: LibraryCell) -> dict[tuple[str, str], tuple[Lut2D, Lut2D]]:
    """Merge all edges/conditions of each (input, output) pair into max tables.

    Every arc is bilinearly resampled onto the union of the arcs' breakpoints
    and the elementwise maximum is taken.
    """
    groups: dict[tuple[str, str], list[Arc]] = {}
    for arc in cell.arcs:
        groups.setdefault((arc.input_pin, arc.output_pin), []).append(arc)
    result = {}
    for key, arcs in groups.items():
        merged = []
        for attr in ("delay", "slew"):
            luts = [getattr(a, attr) for a in arcs]
            sa = _union(l.slew_axis for l in luts)
            la = _union(l.load_axis for l in luts)
            stacked = np.stack([resample(l, sa, la).as_array() for l in luts])
            merged.append(Lut2D.from_arrays(sa, la, stacked.max(axis=0)))
        result[key] = (merged[0], merged[1])
    return result
