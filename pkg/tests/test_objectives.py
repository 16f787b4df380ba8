import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from ctopt.engine import value
from ctopt.legalize import embed, random_design
from ctopt.objectives import Weights, area, bm_loss, d_loss, schedule_step, total_loss, weights_at
from ctopt.optimizer import init_vars
from ctopt.sta import Conditions, Probabilities, analyze


def test_area_examples(tree4, impls, rng):
    design = random_design(tree4, impls, rng)
    want = sum(impls[c.kind][k].area for c, k in zip(tree4.compressors, design.impl))
    assert value(area(embed(design, tree4, impls), tree4, impls)) == pytest.approx(want)


def test_area_single_uniform():
    class Impl:
        def __init__(self, a):
            self.area = a

    class Comp:
        kind = "C22"

    class Model:
        compressors = [Comp()]

    assert area(Probabilities({}, [[0.5, 0.5]]), Model(), {"C22": [Impl(4.0), Impl(6.0)]}) == 5.0


def test_area_matches_enumeration(tree4, impls):
    probs = init_vars(tree4, impls, seed=2, noise=1.0).numeric()
    # expectation over the full product of implementation choices
    kinds = [c.kind for c in tree4.compressors]
    choices = [range(len(impls[k])) for k in kinds]
    total = 0.0
    for combo in itertools.product(*choices):
        pr = math.prod(probs.p[c][k] for c, k in enumerate(combo))
        total += pr * sum(impls[kinds[c]][k].area for c, k in enumerate(combo))
    assert value(area(probs, tree4, impls)) == pytest.approx(total, rel=1e-12)


def test_bm_loss_examples(rng):
    assert bm_loss(Probabilities({(0, 0): np.eye(3)[[2, 0, 1]].tolist()}, [])) == 0.0
    assert bm_loss(Probabilities({(0, 0): [[1.0, 0.0], [1.0, 0.0]]}, [])) == 2.0
    assert bm_loss(Probabilities({(0, 0): [[1.0, 0.0], [1.0, 0.0]]}, []), row_sums=True) == 0.0
    m = rng.dirichlet(np.ones(3), size=3)
    assert bm_loss(Probabilities({(0, 0): m.tolist()}, [])) == pytest.approx(((m.sum(axis=0) - 1) ** 2).sum())


def test_d_loss_examples():
    assert d_loss(Probabilities({(0, 0): np.eye(2).tolist()}, [[0.0, 1.0]])) == 0.0
    assert d_loss(Probabilities({}, [[0.5]])) == 0.0625
    assert d_loss(Probabilities({}, [[0.25] * 4])) == pytest.approx(0.140625)


def test_losses_vanish_exactly_on_legal_designs(tree8, impls, rng):
    for _ in range(5):
        probs = embed(random_design(tree8, impls, rng), tree8, impls)
        assert bm_loss(probs) == 0.0 and d_loss(probs) == 0.0
    probs = init_vars(tree8, impls, seed=0).numeric()
    assert bm_loss(probs) > 0 and d_loss(probs) > 0


def test_total_loss_floor_and_alpha(tree4, tm4, impls, rng):
    design = random_design(tree4, impls, rng)
    probs = embed(design, tree4, impls)
    w = Weights()
    cond = Conditions(rat=10.0)
    state = analyze(tm4, probs, cond)
    parts = total_loss(probs, state, tree4, impls, w)
    a = value(parts.area)
    floor = w.t1 * w.gamma * math.log(len(tree4.outputs()))
    assert w.alpha * a <= value(parts.total) <= w.alpha * a + floor + 1e-12
    bigger = total_loss(probs, state, tree4, impls, replace(w, alpha=2 * w.alpha))
    assert value(bigger.total) > value(parts.total)


def test_schedule_defaults_and_growth():
    w = Weights()
    assert (w.t1, w.t2, w.alpha, w.lambda1, w.lambda2, w.gamma) == (1.0, 0.01, 2.0, 0.1, 0.5, 0.01)
    assert 1 <= w.alpha <= 5
    w99 = weights_at(w, 99)
    assert replace(w99, iteration=0) == w
    w100 = weights_at(w, 100)
    assert replace(w100, iteration=0) == w
    w101 = schedule_step(w100)
    assert w101.alpha == pytest.approx(2.0 * 1.003)
    assert w101.t1 == pytest.approx(1.005) and w101.lambda2 == pytest.approx(0.5 * 1.01)
    w300 = weights_at(w, 300)
    assert w300.lambda1 == pytest.approx(0.1 * 1.01**200, rel=1e-12)
    assert w300.t2 == pytest.approx(0.01 * 1.005**200, rel=1e-12)
    assert w300.gamma == w.gamma
    assert weights_at(w, 300) == w300


def test_weights_validation_and_round_trip():
    with pytest.raises(ValueError):
        Weights(alpha=0.0)
    with pytest.raises(ValueError):
        Weights.from_dict({"beta": 1.0})
    w = weights_at(Weights(alpha=3.0), 150)
    assert Weights.from_dict(w.to_dict()) == w
