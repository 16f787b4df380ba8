import numpy as np
import pytest

from ctopt.golden import golden_area, golden_sta
from ctopt.legalize import baseline_design, embed, identity_design, random_design
from ctopt.liberty import lut_eval
from ctopt.sta import Conditions, TimingModel, analyze
from ctopt.tree import _finish, build_pp_array, slot_model


@pytest.fixture(scope="module")
def chain():
    """C22 in column 0 whose carry feeds port a of a C32 in column 1."""
    pp = build_pp_array(2, 2, 2)
    sa = _finish(list(pp.heights), [[(0, 1), (0, 0), (0, 0)], [(0, 0), (1, 0), (0, 0)]])
    return slot_model(pp, sa)


def test_chain_hand_composed(chain, impls):
    assert [(c.kind, c.column, c.stage) for c in chain.compressors] == [("C22", 0, 0), ("C32", 1, 1)]
    cond = Conditions(input_slew=0.02, input_at=0.0, output_load=3.0)
    for ha in range(len(impls["C22"])):
        for fa in range(len(impls["C32"])):
            h, f = impls["C22"][ha], impls["C32"][fa]
            rep = golden_sta(identity_design(chain, [ha, fa]), chain, impls, cond)
            hl, fl = h.luts(), f.luts()
            load_c = f.cap("a")
            sum0 = max(lut_eval(hl[(p, "sum")][0], 0.02, 3.0) for p in ("a", "b"))
            carry0 = max(lut_eval(hl[(p, "carry")][0], 0.02, load_c) for p in ("a", "b"))
            slew_c = max(lut_eval(hl[(p, "carry")][1], 0.02, load_c) for p in ("a", "b"))
            outs = {}
            for out in ("sum", "carry"):
                outs[out] = max(carry0 + lut_eval(fl[("a", out)][0], slew_c, 3.0),
                                lut_eval(fl[("b", out)][0], 0.02, 3.0),
                                lut_eval(fl[("cin", out)][0], 0.02, 3.0))
            got = dict(zip(rep.outputs, rep.output_at))
            s_col, s_bit = chain.dests[1][0]
            c_col, c_bit = chain.dests[1][1]
            assert got[(0, 0)] == pytest.approx(sum0, rel=1e-12)
            assert got[(s_col, s_bit)] == pytest.approx(outs["sum"], rel=1e-12)
            assert got[(c_col, c_bit)] == pytest.approx(outs["carry"], rel=1e-12)
            assert rep.delay == max(rep.output_at)
            assert golden_area(identity_design(chain, [ha, fa]), chain, impls) == pytest.approx(h.area + f.area)


def test_chain_wiring_changes_timing(chain, impls):
    cond = Conditions()
    base = golden_sta(identity_design(chain), chain, impls, cond)
    perms = dict(identity_design(chain).perms)
    perms[(1, 1)] = (2, 1, 0, 3)  # late carry onto cin
    from ctopt.legalize import LegalDesign
    moved = golden_sta(LegalDesign(perms, (0, 0)), chain, impls, cond)
    assert moved.output_at != base.output_at


@pytest.mark.parametrize("name", ["tree4", "tree8"])
def test_cross_engine_agreement(name, request, impls):
    model = request.getfixturevalue(name)
    tm = TimingModel(model, impls)
    rng = np.random.default_rng(11)
    cond = Conditions(rat=0.3)
    for _ in range(25):
        design = random_design(model, impls, rng)
        exact = golden_sta(design, model, impls, cond)
        relaxed = analyze(tm, embed(design, model, impls), cond, hard=True)
        np.testing.assert_allclose([float(x) for x in relaxed.output_at], exact.output_at, rtol=0, atol=1e-9)
        assert float(relaxed.wns) == pytest.approx(exact.wns, abs=1e-9)
        assert float(relaxed.tns) == pytest.approx(exact.tns, abs=1e-9)


def test_baseline_area_audit(tree8, impls):
    design = baseline_design(tree8, impls)
    fa = impls["C32"][design.impl[[c.kind for c in tree8.compressors].index("C32")]].area
    ha = impls["C22"][design.impl[[c.kind for c in tree8.compressors].index("C22")]].area
    assert (fa, ha) == (4.256, 2.66)
    assert golden_area(design, tree8, impls) == pytest.approx(35 * 4.256 + 7 * 2.66) == pytest.approx(167.58)


def test_report_fields(tree4, impls):
    rep = golden_sta(identity_design(tree4), tree4, impls, Conditions(rat=10.0))
    assert rep.wns == 0.0 and rep.tns == 0.0
    assert all(s > 0 for s in rep.slack)
    d = rep.to_dict()
    assert d["delay"] == rep.delay and len(d["outputs"]) == len(tree4.outputs())
    assert rep.slew_out_of_grid == 0
