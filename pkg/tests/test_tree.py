import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctopt.tree import (
    StructureError,
    SlotModel,
    _finish,
    build_pp_array,
    build_tree,
    column_values,
    dadda_assignment,
    dadda_targets,
    slot_model,
    wallace_assignment,
)


def d_sequence_stages(max_height):
    """Independent oracle: walk d_1 = 2, d_{k+1} = floor(1.5 d_k) up to the height."""
    d = [2]
    while d[-1] < max_height:
        d.append(int(1.5 * d[-1]))
    return sum(1 for x in d if x < max_height)


def test_pp_heights():
    assert build_pp_array(4, 4).heights == (1, 2, 3, 4, 3, 2, 1)
    pp = build_pp_array(8, 8)
    assert pp.total_bits == 64 and max(pp.heights) == 8
    mac = build_pp_array(4, 4, 8)
    assert mac.total_bits == 24
    assert mac.heights == (2, 3, 4, 5, 4, 3, 2, 1)
    assert build_pp_array(3, 5).heights == (1, 2, 3, 3, 3, 2, 1)


def test_pp_rejects_narrow():
    with pytest.raises(ValueError):
        build_pp_array(1, 4)
    with pytest.raises(ValueError):
        build_pp_array(4, 4, 9)


def test_dadda_targets():
    assert dadda_targets(8) == [6, 4, 3, 2]
    assert dadda_targets(16) == [13, 9, 6, 4, 3, 2]
    assert dadda_targets(3) == [2]


@pytest.mark.parametrize("n,stages", [(4, 2), (8, 4), (16, 6), (12, 5), (6, 3)])
def test_dadda_stage_counts(n, stages):
    sa = dadda_assignment(build_pp_array(n, n))
    assert sa.n_stages == stages == d_sequence_stages(n)
    assert max(sa.heights[-1]) <= 2


@pytest.mark.parametrize("n", [4, 6, 8, 12, 16])
def test_dadda_adder_counts_closed_form(n):
    # an n x n Dadda tree uses n^2 - 4n + 3 full adders and n - 1 half adders
    assert dadda_assignment(build_pp_array(n, n)).totals() == (n * n - 4 * n + 3, n - 1)


def test_dadda_per_stage_heights_meet_targets():
    sa = dadda_assignment(build_pp_array(16, 16))
    for h, target in zip(sa.heights[1:], dadda_targets(16)):
        assert max(h) <= target


def test_max_height_three_is_one_stage():
    # 2x2 multiplier plus a 2-bit accumulator peaks at height 3
    pp = build_pp_array(2, 2, 2)
    assert max(pp.heights) == 3
    assert dadda_assignment(pp).n_stages == 1


def wallace_oracle_stages(heights):
    h = list(heights)
    stages = 0
    while max(h) > 2:
        out = [0] * (len(h) + 1)
        for i, x in enumerate(h):
            fa, ha = x // 3, 1 if x % 3 == 2 else 0
            out[i] += x - 3 * fa - 2 * ha + fa + ha
            out[i + 1] += fa + ha
        h = out if out[-1] else out[:-1]
        stages += 1
    return stages


@pytest.mark.parametrize("n", [4, 8, 16])
def test_wallace_stage_counts(n):
    pp = build_pp_array(n, n)
    sa = wallace_assignment(pp)
    assert sa.n_stages == wallace_oracle_stages(pp.heights)
    if n == 8:
        assert sa.n_stages == 4


def test_wallace_rules():
    sa = wallace_assignment(build_pp_array(8, 8))
    for j, row in enumerate(sa.counts):
        for i, (n32, n22) in enumerate(row):
            h = sa.heights[j][i]
            assert n32 == h // 3
            assert n22 == (1 if h % 3 == 2 else 0)


@pytest.mark.parametrize("family", ["dadda", "wallace"])
@pytest.mark.parametrize("args", [(4, 4, 0), (8, 8, 0), (4, 4, 8), (8, 8, 16), (5, 3, 0)])
def test_bit_conservation_and_slot_sizes(family, args):
    model = build_tree(*args, family=family)
    sa = model.assignment
    for j in range(sa.n_stages):
        for i in range(sa.n_columns):
            n32, n22 = sa.counts[j][i]
            cin = sum(sa.counts[j][i - 1]) if i else 0
            assert sa.heights[j + 1][i] == sa.heights[j][i] - 3 * n32 - 2 * n22 + n32 + n22 + cin
            cell = model.cells[(i, j)]
            assert len(cell.slots) == len(cell.signals) == sa.heights[j][i]


def _wallace_rows(h):
    rows = []
    while max(h) > 2:
        row = [(x // 3, 1 if x % 3 == 2 else 0) for x in h] + [(0, 0)]
        h = [x - 2 * a - b + (sum(row[i - 1]) if i else 0) for i, (x, (a, b)) in enumerate(zip(h + [0], row))]
        rows.append(row)
    return rows


def _custom_model(pp, first_row):
    h = list(pp.heights) + [0]
    row = list(first_row) + [(0, 0)] * (len(h) - len(first_row))
    nxt = [x - 2 * a - b + (sum(row[i - 1]) if i else 0) for i, (x, (a, b)) in enumerate(zip(h, row))]
    return slot_model(pp, _finish(list(pp.heights), [row] + _wallace_rows(nxt)))


def test_slot_examples():
    pp = build_pp_array(2, 2, 2)
    model = slot_model(pp, _finish(list(pp.heights), [[(0, 0), (1, 0), (0, 0)]]))
    assert model.cells[(1, 0)].slots == [(0, 0), (0, 1), (0, 2)]
    # a 5-high column with one C32 keeps two passthrough slots after the ports
    pp = build_pp_array(5, 5)
    model = _custom_model(pp, [(0, 0)] * 4 + [(1, 0)])
    assert model.cells[(4, 0)].slots == [(0, 0), (0, 1), (0, 2), (-1, 0), (-1, 1)]
    # C32 ports, then C22 ports, then passthroughs
    model = _custom_model(pp, [(0, 0)] * 3 + [(1, 0), (1, 1)])
    assert model.cells[(4, 0)].slots == [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1)]
    assert model.cells[(3, 0)].slots == [(0, 0), (0, 1), (0, 2), (-1, 0)]


def test_signal_order_convention(tree8):
    for j in range(tree8.n_stages):
        for i in range(tree8.n_columns):
            tags = [t for t, _ in tree8.cells[(i, j + 1)].signals]
            order = {"sum": 0, "carry": 1, "pass": 2}
            assert tags == sorted(tags, key=order.__getitem__)
            sums = [c for t, c in tree8.cells[(i, j + 1)].signals if t == "sum"]
            assert sums == [c.index for c in tree8.compressors_at(i, j)]
            carries = [c for t, c in tree8.cells[(i, j + 1)].signals if t == "carry"]
            assert carries == [c.index for c in tree8.compressors_at(i - 1, j)] if i else carries == []


def _weighted(vals):
    return [sum(sum(x.astype(np.int64) for x in col) << i for i, col in enumerate(stage) if col) for stage in vals]


@pytest.mark.parametrize("args", [(4, 4, 0), (4, 4, 8), (6, 5, 3)])
def test_arithmetic_invariant_every_stage(args):
    model = build_tree(*args)
    wa, wb, acc = args
    rng = np.random.default_rng(0)
    a = rng.integers(0, 1 << wa, 500)
    b = rng.integers(0, 1 << wb, 500)
    c = rng.integers(0, 1 << acc, 500) if acc else None
    want = a * b + (c if c is not None else 0)
    for total in _weighted(column_values(model, a, b, c)):
        np.testing.assert_array_equal(total, want)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_arithmetic_invariant_under_random_permutations(seed):
    model = build_tree(5, 4, 3)
    rng = np.random.default_rng(seed)
    perms = {k: list(rng.permutation(model.cells[k].size)) for k in model.matrix_keys()}
    a = rng.integers(0, 32, 200)
    b = rng.integers(0, 16, 200)
    c = rng.integers(0, 8, 200)
    totals = _weighted(column_values(model, a, b, c, perms))
    for t in totals:
        np.testing.assert_array_equal(t, a * b + c)
    assert all(cell.size <= 2 for cell in model.stage_cells(model.n_stages))


def test_round_trip_and_tamper(tree8):
    d = tree8.to_dict()
    again = SlotModel.from_dict(d)
    assert again.to_dict() == d
    bad = dict(d, heights=[list(h) for h in d["heights"]])
    bad["heights"][1][3] += 1
    with pytest.raises(StructureError):
        SlotModel.from_dict(bad)
    bad = dict(d, slots=dict(d["slots"]))
    key = next(k for k, v in d["slots"].items() if len(v) > 1)
    bad["slots"][key] = list(reversed(d["slots"][key]))
    with pytest.raises(StructureError):
        SlotModel.from_dict(bad)


def test_inconsistent_counts_rejected():
    pp = build_pp_array(4, 4)
    with pytest.raises(StructureError):
        _finish(list(pp.heights), [[(0, 0), (1, 0)] + [(0, 0)] * 5])  # 3 bits in a 2-bit column
    sa = dadda_assignment(pp)
    with pytest.raises(StructureError):
        slot_model(build_pp_array(5, 4), sa)


def test_unknown_family():
    with pytest.raises(ValueError):
        build_tree(4, 4, family="booth")
