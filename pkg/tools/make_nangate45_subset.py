"""Regenerate src/ctopt/data/nangate45_subset.lib.

The table values are produced from a smooth per-arc delay model fitted by
eye to Nangate45 typical-corner magnitudes. Axes, areas, template names and
cell/pin names follow the Open Cell Library conventions.
"""
from __future__ import annotations

import sys
from pathlib import Path

SLEWS = [0.00117378, 0.00472397, 0.0171859, 0.0409838, 0.0780596, 0.130081, 0.198535]
LOADS = [0.365616, 1.897810, 3.795620, 7.591250, 15.182500, 30.365000, 60.730000]

# (d0, slew coefficient, drive resistance ns/fF) for delay; (t0, slew coeff, ns/fF) for transition
def arc(d0, r, t0, rt, ks=0.28, kt=0.12):
    return (d0, ks, r, t0, kt, rt)


CELLS = {
    "INV_X1": dict(area=0.532, inputs={"A": 1.700230}, outputs={"ZN": "!A"},
                   arcs={("A", "ZN"): (arc(0.0062, 0.0074, 0.0040, 0.0130), arc(0.0041, 0.0044, 0.0030, 0.0071))}),
    "NAND2_X1": dict(area=0.798, inputs={"A1": 1.599032, "A2": 1.662045}, outputs={"ZN": "!(A1 & A2)"},
                     arcs={("A1", "ZN"): (arc(0.0085, 0.0075, 0.0050, 0.0130), arc(0.0098, 0.0061, 0.0060, 0.0095)),
                           ("A2", "ZN"): (arc(0.0091, 0.0076, 0.0052, 0.0131), arc(0.0106, 0.0062, 0.0062, 0.0096))}),
    "NOR2_X1": dict(area=0.798, inputs={"A1": 1.714471, "A2": 1.650380}, outputs={"ZN": "!(A1 | A2)"},
                    arcs={("A1", "ZN"): (arc(0.0140, 0.0142, 0.0080, 0.0260), arc(0.0061, 0.0045, 0.0035, 0.0072)),
                          ("A2", "ZN"): (arc(0.0128, 0.0140, 0.0078, 0.0258), arc(0.0057, 0.0044, 0.0034, 0.0071))}),
    "AND2_X1": dict(area=1.064, inputs={"A1": 0.918145, "A2": 0.974188}, outputs={"ZN": "(A1 & A2)"},
                    arcs={("A1", "ZN"): (arc(0.0248, 0.0042, 0.0062, 0.0087, ks=0.22), arc(0.0275, 0.0027, 0.0055, 0.0049, ks=0.25)),
                          ("A2", "ZN"): (arc(0.0262, 0.0042, 0.0063, 0.0087, ks=0.22), arc(0.0291, 0.0027, 0.0056, 0.0049, ks=0.25))}),
    "OR2_X1": dict(area=1.064, inputs={"A1": 0.946814, "A2": 0.947048}, outputs={"ZN": "(A1 | A2)"},
                   arcs={("A1", "ZN"): (arc(0.0221, 0.0043, 0.0065, 0.0088, ks=0.22), arc(0.0447, 0.0030, 0.0078, 0.0056, ks=0.26)),
                         ("A2", "ZN"): (arc(0.0236, 0.0043, 0.0066, 0.0088, ks=0.22), arc(0.0478, 0.0030, 0.0080, 0.0056, ks=0.26))}),
    "XOR2_X1": dict(area=1.596, inputs={"A": 2.231513, "B": 2.408453}, outputs={"Z": "(A ^ B)"},
                    arcs={("A", "Z"): (arc(0.0352, 0.0066, 0.0110, 0.0120, ks=0.30), arc(0.0398, 0.0045, 0.0090, 0.0078, ks=0.30)),
                          ("B", "Z"): (arc(0.0325, 0.0065, 0.0105, 0.0119, ks=0.30), arc(0.0372, 0.0044, 0.0088, 0.0077, ks=0.30))}),
    "XNOR2_X1": dict(area=1.596, inputs={"A": 2.223275, "B": 2.573941}, outputs={"ZN": "!(A ^ B)"},
                     arcs={("A", "ZN"): (arc(0.0341, 0.0067, 0.0112, 0.0121, ks=0.30), arc(0.0384, 0.0046, 0.0091, 0.0079, ks=0.30)),
                           ("B", "ZN"): (arc(0.0318, 0.0066, 0.0106, 0.0120, ks=0.30), arc(0.0359, 0.0045, 0.0089, 0.0078, ks=0.30))}),
    "HA_X1": dict(area=2.660, inputs={"A": 3.185370, "B": 3.401370}, outputs={"CO": "(A & B)", "S": "(A ^ B)"},
                  arcs={("A", "CO"): (arc(0.0281, 0.0043, 0.0068, 0.0088), arc(0.0319, 0.0028, 0.0060, 0.0050)),
                        ("B", "CO"): (arc(0.0296, 0.0043, 0.0069, 0.0088), arc(0.0334, 0.0028, 0.0061, 0.0050)),
                        ("A", "S"): (arc(0.0452, 0.0068, 0.0118, 0.0124, ks=0.31), arc(0.0501, 0.0047, 0.0095, 0.0080, ks=0.31)),
                        ("B", "S"): (arc(0.0433, 0.0067, 0.0114, 0.0123, ks=0.31), arc(0.0488, 0.0046, 0.0093, 0.0079, ks=0.31))}),
    "FA_X1": dict(area=4.256, inputs={"A": 3.188700, "B": 3.435330, "CI": 2.664540},
                  outputs={"CO": "((A & B) | (CI & (A | B)))", "S": "(CI ^ (A ^ B))"},
                  arcs={("A", "CO"): (arc(0.0618, 0.0045, 0.0101, 0.0090), arc(0.0655, 0.0030, 0.0092, 0.0054)),
                        ("B", "CO"): (arc(0.0647, 0.0045, 0.0103, 0.0090), arc(0.0688, 0.0030, 0.0094, 0.0054)),
                        ("CI", "CO"): (arc(0.0541, 0.0044, 0.0097, 0.0089), arc(0.0576, 0.0029, 0.0088, 0.0053)),
                        ("A", "S"): (arc(0.0846, 0.0070, 0.0128, 0.0126), arc(0.0889, 0.0049, 0.0110, 0.0082)),
                        ("B", "S"): (arc(0.0878, 0.0070, 0.0130, 0.0126), arc(0.0921, 0.0049, 0.0112, 0.0082)),
                        ("CI", "S"): (arc(0.0702, 0.0069, 0.0121, 0.0125), arc(0.0741, 0.0048, 0.0104, 0.0081))}),
}

# conditional variants: (cell, in, out) -> list of (when, multiplier on d0)
WHEN = {
    ("FA_X1", "A", "S"): [("(!B & !CI) | (B & CI)", 1.0), ("(B & !CI) | (!B & CI)", 0.96)],
    ("FA_X1", "B", "S"): [("(!A & !CI) | (A & CI)", 1.0), ("(A & !CI) | (!A & CI)", 0.97)],
    ("FA_X1", "CI", "S"): [("(!A & !B) | (A & B)", 1.0), ("(A & !B) | (!A & B)", 0.95)],
    ("XOR2_X1", "A", "Z"): [("!B", 1.0), ("B", 0.93)],
    ("XOR2_X1", "B", "Z"): [("!A", 1.0), ("A", 0.94)],
    ("HA_X1", "A", "S"): [("!B", 1.0), ("B", 0.95)],
    ("HA_X1", "B", "S"): [("!A", 1.0), ("A", 0.96)],
}


def table(p, scale=1.0):
    d0, ks, r, _, _, _ = p
    rows = []
    for s in SLEWS:
        rows.append([scale * d0 + ks * s + r * c + 0.9 * s * r * c / (0.02 + s) * 0.1 for c in LOADS])
    return rows


def trans(p):
    _, _, _, t0, kt, rt = p
    return [[t0 + kt * s + rt * c + 0.02 * s * s / (0.05 + s) for c in LOADS] for s in SLEWS]


def fmt_table(name, rows, ind):
    pad = " " * ind
    out = [f"{pad}{name}(Timing_7_7) {{"]
    out.append(f'{pad}  index_1 ("{", ".join(f"{v:.8f}" for v in SLEWS)}");')
    out.append(f'{pad}  index_2 ("{", ".join(f"{v:.6f}" for v in LOADS)}");')
    body = [f'{pad}             "' + ", ".join(f"{v:.6f}" for v in row) + '"' for row in rows]
    body[0] = f'{pad}  values (' + body[0].lstrip()
    out.append(", \\\n".join(body) + ");")
    out.append(f"{pad}}}")
    return "\n".join(out)


def main(path):
    lines = [
        "/* Nangate45-style open cell library subset: typical corner, combinational cells only. */",
        "library (NangateOpenCellLibrary_subset) {",
        '  delay_model : table_lookup;',
        '  time_unit : "1ns";',
        '  voltage_unit : "1V";',
        '  current_unit : "1uA";',
        '  leakage_power_unit : "1nW";',
        '  capacitive_load_unit (1,ff);',
        '  nom_process : 1.0;',
        '  nom_temperature : 25.0;',
        '  nom_voltage : 1.10;',
        "  lu_table_template (Timing_7_7) {",
        "    variable_1 : input_net_transition;",
        "    variable_2 : total_output_net_capacitance;",
        f'    index_1 ("{", ".join(f"{v:.8f}" for v in SLEWS)}");',
        f'    index_2 ("{", ".join(f"{v:.6f}" for v in LOADS)}");',
        "  }",
        "",
    ]
    for name, c in CELLS.items():
        lines.append(f"  cell ({name}) {{")
        lines.append(f"    drive_strength : 1;")
        lines.append(f"    area : {c['area']:.6f};")
        lines.append(f"    cell_leakage_power : 20.0;")
        for pin, cap in c["inputs"].items():
            lines += [f"    pin ({pin}) {{", "      direction : input;",
                      f"      capacitance : {cap:.6f};", f"      fall_capacitance : {cap * 0.97:.6f};",
                      f"      rise_capacitance : {cap:.6f};", "    }"]
        for out, fn in c["outputs"].items():
            lines += [f"    pin ({out}) {{", "      direction : output;",
                      "      max_capacitance : 60.730000;", f'      function : "{fn}";']
            for (i, o), (rise, fall) in c["arcs"].items():
                if o != out:
                    continue
                for when, k in WHEN.get((name, i, o), [(None, 1.0)]):
                    lines.append("      timing () {")
                    lines.append(f'        related_pin : "{i}";')
                    if when:
                        lines.append(f'        when : "{when}";')
                        lines.append(f'        sdf_cond : "{when}";')
                    lines.append("        timing_sense : non_unate;" if "^" in fn else
                                 ("        timing_sense : negative_unate;" if fn.startswith("!") else
                                  "        timing_sense : positive_unate;"))
                    lines.append(fmt_table("cell_fall", table(fall, k), 8))
                    lines.append(fmt_table("cell_rise", table(rise, k), 8))
                    lines.append(fmt_table("fall_transition", trans(fall), 8))
                    lines.append(fmt_table("rise_transition", trans(rise), 8))
                    lines.append("      }")
            lines.append("    }")
        lines.append("  }")
        lines.append("")
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/ctopt/data/nangate45_subset.lib")
