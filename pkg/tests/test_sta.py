import itertools
import math

import numpy as np
import pytest

from ctopt.engine import Tape, backward, value
from ctopt.legalize import embed, identity_design, random_design
from ctopt.liberty import lut_eval
from ctopt.optimizer import init_vars
from ctopt.sta import Conditions, Probabilities, TimingModel, analyze, expected_caps, propagate, slacks
from ctopt.tree import _finish, build_pp_array, slot_model


@pytest.fixture(scope="module")
def single(impls):
    """2x2 multiplier with a 2-bit accumulator: one C32 in column 1."""
    pp = build_pp_array(2, 2, 2)
    model = slot_model(pp, _finish(list(pp.heights), [[(0, 0), (1, 0), (0, 0)]]))
    return model, TimingModel(model, impls)


def uniform_probs(model, impls, M=None):
    Ms = {k: M[k] if M and k in M else [[1.0 / model.cells[k].size] * model.cells[k].size] * model.cells[k].size
          for k in model.matrix_keys()}
    p = [[1.0 / len(impls[c.kind])] * len(impls[c.kind]) for c in model.compressors]
    return Probabilities(Ms, p)


def test_uniform_implementation_cap_is_mean(single, impls):
    model, tm = single
    slot_cap, load = expected_caps(tm, uniform_probs(model, impls), Conditions())
    for port, got in zip(("a", "b", "cin"), slot_cap[(1, 0)]):
        assert value(got) == pytest.approx(np.mean([impl.cap(port) for impl in impls["C32"]]))
    # passthroughs see the primary-output load
    assert slot_cap[(0, 0)] == [3.0, 3.0]
    # uniform interconnection: every signal sees the mean slot cap
    mean = np.mean([value(x) for x in slot_cap[(1, 0)]])
    assert all(value(x) == pytest.approx(mean) for x in load[(1, 0)])


def test_single_compressor_hand_composed(single, impls):
    model, tm = single
    cond = Conditions(input_slew=0.02, input_at=0.1, output_load=3.0, gamma=0.01)
    probs = uniform_probs(model, impls, {(1, 0): np.eye(3).tolist()})
    state = propagate(tm, probs, cond)
    k = len(impls["C32"])
    for out, (col, u) in zip(("sum", "carry"), model.dests[0]):
        arrivals = []
        for port in ("a", "b", "cin"):
            d = sum(lut_eval(impl.luts()[(port, out)][0], 0.02, 3.0) for impl in impls["C32"]) / k
            arrivals.append(0.1 + d)
        want = max(arrivals) + 0.01 * math.log(sum(math.exp((a - max(arrivals)) / 0.01) for a in arrivals))
        assert value(state.at[(col, 1)][u]) == pytest.approx(want, rel=1e-12)
    # passthrough arrival is unchanged
    assert value(state.at[(0, 1)][0]) == 0.1


def test_equal_arrivals_lse_offset():
    from ctopt.engine import lse
    assert lse([0.4] * 3, 0.01) == pytest.approx(0.4 + 0.01 * math.log(3))


def test_slack_examples(single):
    model, tm = single
    from ctopt.sta import TimingState
    st = TimingState({}, {}, {}, {}, [(0, 0), (1, 0), (2, 0)], [0.3, 0.6, 0.7])
    wns, tns = slacks(st, 0.5, 0.01, hard=True)
    assert st.slack == pytest.approx([0.2, -0.1, -0.2])
    assert wns == pytest.approx(0.2) and tns == pytest.approx(0.3)
    wns, _ = slacks(st, 0.5, 0.01)
    assert wns == pytest.approx(0.2 + 0.01 * math.log(1 + math.exp(-10) + math.exp(-20)))
    wns, tns = slacks(st, 1.0, 0.01, hard=True)
    assert wns == 0.0 and tns == 0.0


def test_brute_force_loads_are_expected_over_permutations(single, impls):
    """Relaxed loads under a mixture of permutations equal the mixture of exact loads."""
    model, tm = single
    rng = np.random.default_rng(3)
    perms = list(itertools.permutations(range(3)))
    w = rng.dirichlet(np.ones(len(perms)))
    M = np.zeros((3, 3))
    for wk, perm in zip(w, perms):
        M[range(3), perm] += wk
    probs = uniform_probs(model, impls, {(1, 0): M.tolist()})
    probs.p = [[0.0, 1.0, 0.0]]
    _, relaxed = expected_caps(tm, probs, Conditions())
    caps = [impls["C32"][1].cap(p) for p in ("a", "b", "cin")]
    for u in range(3):
        exact = sum(wk * caps[perm[u]] for wk, perm in zip(w, perms))
        assert value(relaxed[(1, 0)][u]) == pytest.approx(exact, rel=1e-12)


def test_later_input_never_earlier_output(tree4, tm4, impls):
    rng = np.random.default_rng(0)
    probs = init_vars(tree4, impls, seed=1, noise=0.5).numeric()
    base = propagate(tm4, probs, Conditions())
    n_in = sum(c.size for c in tree4.stage_cells(0))
    for _ in range(5):
        bump = rng.uniform(0, 0.05, n_in)
        later = propagate(tm4, probs, Conditions(input_at=bump))
        assert all(b >= a - 1e-12 for a, b in zip(base.output_at, later.output_at))


def test_rat_shifts_slack(tm4, tree4, impls):
    probs = embed(identity_design(tree4), tree4, impls)
    a = analyze(tm4, probs, Conditions(rat=0.0), hard=True)
    b = analyze(tm4, probs, Conditions(rat=0.2), hard=True)
    assert np.allclose(np.array(b.slack) - np.array(a.slack), 0.2)


def test_smooth_upper_bounds_hard_on_legal_designs(tree4, tm4, impls, rng):
    cond = Conditions()
    for _ in range(10):
        probs = embed(random_design(tree4, impls, rng), tree4, impls)
        hard = analyze(tm4, probs, cond, hard=True)
        soft = analyze(tm4, probs, cond)
        gap = tree4.n_stages * cond.gamma * math.log(3) + 1e-12
        for h, s in zip(hard.output_at, soft.output_at):
            assert h - 1e-12 <= s <= h + gap


def test_loss_gradient_matches_finite_difference(tree4, tm4, impls):
    vars_ = init_vars(tree4, impls, seed=5, noise=0.3)
    cond = Conditions(rat=0.0, gamma=0.05)

    def f(v):
        return value(analyze(tm4, v.derive(Tape()), cond).wns)

    tape = Tape()
    backward(analyze(tm4, vars_.derive(tape), cond).wns)
    key = max(vars_.m_aux, key=lambda k: vars_.m_aux[k].shape[0])
    h = 1e-6
    for idx in [(0, 0), (0, 1), (1, 0)]:
        up, dn = vars_.copy(), vars_.copy()
        up.m_aux[key].values[idx] += h
        dn.m_aux[key].values[idx] -= h
        fd = (f(up) - f(dn)) / (2 * h)
        assert vars_.m_aux[key].grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)
    for c in range(3):
        up, dn = vars_.copy(), vars_.copy()
        up.p_aux[c].values[0] += h
        dn.p_aux[c].values[0] -= h
        assert vars_.p_aux[c].grad[0] == pytest.approx((f(up) - f(dn)) / (2 * h), rel=1e-4, abs=1e-9)
