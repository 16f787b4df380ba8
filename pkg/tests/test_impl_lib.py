import numpy as np
import pytest

from ctopt.impl_lib import (
    C22,
    C32,
    DEFAULT_LOAD_GRID,
    DEFAULT_SLEW_GRID,
    ImplError,
    ImplNetlist,
    ImplSet,
    characterize,
    load_catalog,
    macro_point,
    verify_function,
)
from ctopt.liberty import lut_eval, resample, worst_case_arcs


def _catalog():
    return {nl.name: nl for nl in load_catalog()}


def _chain_c22():
    # sum = INV(XNOR(a, b)) is a two-cell chain on every a/b -> sum path
    return ImplNetlist.from_dict({
        "name": "ha_xnor_inv", "kind": "C22",
        "instances": [
            {"id": "x0", "cell": "XNOR2_X1", "pins": {"A": "a", "B": "b", "ZN": "n"}},
            {"id": "i0", "cell": "INV_X1", "pins": {"A": "n", "ZN": "s"}},
            {"id": "g0", "cell": "AND2_X1", "pins": {"A1": "a", "A2": "b", "ZN": "co"}},
        ],
        "ports": {"a": "a", "b": "b", "sum": "s", "carry": "co"},
    })


def test_kinds():
    assert (C32.inputs, C32.outputs) == (("a", "b", "cin"), ("sum", "carry"))
    assert (C22.inputs, C22.outputs) == (("a", "b"), ("sum", "carry"))


def test_catalog_has_two_of_each_kind():
    cat = load_catalog()
    assert sum(nl.kind is C32 for nl in cat) >= 2
    assert sum(nl.kind is C22 for nl in cat) >= 2


@pytest.mark.parametrize("name", ["fa_cell", "fa_xor_andor", "fa_xor_nand", "ha_cell", "ha_xor_and"])
def test_catalog_functions(lib, name):
    assert verify_function(_catalog()[name], lib)


def test_swapped_outputs_fail(lib):
    d = _catalog()["fa_xor_andor"].to_dict()
    d["ports"]["sum"], d["ports"]["carry"] = d["ports"]["carry"], d["ports"]["sum"]
    bad = ImplNetlist.from_dict(d)
    assert not verify_function(bad, lib)
    with pytest.raises(ImplError):
        characterize(bad, lib)


def test_unknown_cell(lib):
    d = _catalog()["ha_cell"].to_dict()
    d["instances"][0]["cell"] = "NOPE_X1"
    with pytest.raises(KeyError):
        verify_function(ImplNetlist.from_dict(d), lib)


def test_cycle_rejected(lib):
    nl = ImplNetlist.from_dict({
        "name": "loop", "kind": "C22",
        "instances": [
            {"id": "x0", "cell": "XOR2_X1", "pins": {"A": "a", "B": "m", "Z": "s"}},
            {"id": "x1", "cell": "AND2_X1", "pins": {"A1": "s", "A2": "b", "ZN": "m"}},
            {"id": "g0", "cell": "AND2_X1", "pins": {"A1": "a", "A2": "b", "ZN": "co"}},
        ],
        "ports": {"a": "a", "b": "b", "sum": "s", "carry": "co"},
    })
    with pytest.raises(ImplError):
        nl.check(lib)


def test_single_cell_is_resampled_cell(lib):
    impl = characterize(_catalog()["fa_cell"], lib)
    wc = worst_case_arcs(lib.cell("FA_X1"))
    names = {"a": "A", "b": "B", "cin": "CI", "sum": "S", "carry": "CO"}
    for (u, v), (d, s) in impl.luts().items():
        wd, ws = wc[(names[u], names[v])]
        assert d == resample(wd, DEFAULT_SLEW_GRID, DEFAULT_LOAD_GRID)
        assert s == resample(ws, DEFAULT_SLEW_GRID, DEFAULT_LOAD_GRID)
    assert impl.area == lib.cell("FA_X1").area
    assert impl.cap("cin") == lib.cell("FA_X1").pin_cap("CI")


def test_fa_cell_at_reference_operating_point(lib):
    """islew 0.02 ns, oload 3 fF: the macro equals the cell's worst-case arc."""
    nl = _catalog()["fa_cell"]
    wc = worst_case_arcs(lib.cell("FA_X1"))
    d, s = macro_point(nl, lib, "a", "sum", 0.02, 3.0)
    assert d == lut_eval(wc[("A", "S")][0], 0.02, 3.0)
    assert s == lut_eval(wc[("A", "S")][1], 0.02, 3.0)
    impl = characterize(nl, lib, (0.01, 0.02, 0.05), (1.0, 3.0, 6.0))
    assert lut_eval(impl.luts()[("a", "sum")][0], 0.02, 3.0) == d


def test_two_cell_chain_hand_composed(lib):
    nl = _chain_c22()
    assert verify_function(nl, lib)
    impl = characterize(nl, lib)
    xn = worst_case_arcs(lib.cell("XNOR2_X1"))
    inv = worst_case_arcs(lib.cell("INV_X1"))
    cap_mid = lib.cell("INV_X1").pin_cap("A")
    for u, pin in (("a", "A"), ("b", "B")):
        d_lut, s_lut = impl.luts()[(u, "sum")]
        for i, s in enumerate(DEFAULT_SLEW_GRID):
            for j, L in enumerate(DEFAULT_LOAD_GRID):
                d1 = lut_eval(xn[(pin, "ZN")][0], s, cap_mid)
                s1 = lut_eval(xn[(pin, "ZN")][1], s, cap_mid)
                d2 = lut_eval(inv[("A", "ZN")][0], s1, L)
                assert d_lut.values[i][j] == pytest.approx(d1 + d2, abs=1e-15)
                assert s_lut.values[i][j] == pytest.approx(lut_eval(inv[("A", "ZN")][1], s1, L), abs=1e-15)


def test_area_and_caps_are_sums(lib, impls):
    for items in impls.impls.values():
        for impl in items:
            nl = impl.source
            assert impl.area == pytest.approx(sum(lib.cell(i.cell).area for i in nl.instances))
            for port in nl.kind.inputs:
                net = nl.port_net(port)
                want = sum(lib.cell(i.cell).pin_cap(p) for i in nl.instances for p, n in i.pins
                           if n == net and p in lib.cell(i.cell).input_names)
                assert impl.cap(port) == pytest.approx(want)


def _reaches(nl, lib, target):
    """Nets from which ``target`` is combinationally reachable."""
    good = {target}
    changed = True
    while changed:
        changed = False
        for inst in nl.instances:
            cell = lib.cell(inst.cell)
            pins = dict(inst.pins)
            if any(pins.get(o) in good for o in cell.output_pins):
                for p in cell.input_names:
                    if pins[p] not in good:
                        good.add(pins[p])
                        changed = True
    return good


def test_macro_delay_dominates_first_hop(lib, impls):
    """Every u->v macro delay is at least the delay of the first cell on any u->v path."""
    for items in impls.impls.values():
        for impl in items:
            nl = impl.source
            for (u, v), (d, _) in impl.luts().items():
                reach = _reaches(nl, lib, nl.port_net(v))
                for inst in nl.instances:
                    cell = lib.cell(inst.cell)
                    pins = dict(inst.pins)
                    arcs = worst_case_arcs(cell)
                    for p in cell.input_names:
                        if pins[p] != nl.port_net(u):
                            continue
                        for o in cell.output_pins:
                            if o not in pins or pins[o] not in reach or (p, o) not in arcs:
                                continue
                            for s in d.slew_axis:
                                for L in d.load_axis:
                                    sinks = sum(lib.cell(i.cell).pin_cap(q) for i in nl.instances
                                                for q, n in i.pins if n == pins[o] and q in lib.cell(i.cell).input_names)
                                    load = sinks + (L if pins[o] == nl.port_net(v) else 0.0)
                                    hop = lut_eval(arcs[(p, o)][0], s, load)
                                    assert lut_eval(d, s, L) >= hop - 1e-12


def test_deterministic_and_serializable(lib, impls):
    again = ImplSet.from_dict(impls.to_dict())
    assert again == impls
    nl = _catalog()["fa_xor_nand"]
    assert characterize(nl, lib) == characterize(nl, lib)


def test_decompositions_trade_area_for_speed(impls):
    fa = impls["C32"]
    names = [i.name for i in fa]
    mono = fa[names.index("fa_cell")]
    split = fa[names.index("fa_xor_andor")]
    assert split.area > mono.area
    cin_sum = lambda impl: lut_eval(impl.luts()[("cin", "sum")][0], 0.02, 3.0)
    assert cin_sum(split) < cin_sum(mono)
