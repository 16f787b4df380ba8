import json
from dataclasses import replace

import numpy as np
import pytest

from ctopt.artifacts import ArtifactError
from ctopt.engine import value
from ctopt.objectives import Weights
from ctopt.optimizer import (
    TRACE_FIELDS,
    OptimizationError,
    RunConfig,
    RunState,
    checkpoint,
    evaluate,
    init_vars,
    optimize,
    restore,
    write_trace,
)
from ctopt.sta import TimingModel
from ctopt.tree import build_tree


def strip_time(trace):
    return [{k: v for k, v in row.items() if k != "wall_time"} for row in trace]


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(iterations=0)
    with pytest.raises(ValueError):
        RunConfig(lr=0.0)
    with pytest.raises(ValueError):
        RunConfig.from_dict({"iterations": 3, "momentum": 0.9})
    cfg = RunConfig(iterations=7, weights=Weights(alpha=4.0))
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert cfg.cond().gamma == cfg.weights.gamma


def test_init_vars_deterministic(tree8, impls):
    a = init_vars(tree8, impls, seed=3)
    b = init_vars(tree8, impls, seed=3)
    for x, y in zip(a.params(), b.params()):
        assert np.array_equal(x.values, y.values)
    assert not np.array_equal(init_vars(tree8, impls, seed=4).p_aux[0].values, a.p_aux[0].values)
    for rows in a.numeric().M.values():
        assert np.allclose(np.sum(rows, axis=1), 1.0)


def test_run_is_deterministic(tree4, impls):
    cfg = RunConfig(iterations=15, seed=2)
    a = optimize(cfg, tree4, impls)
    b = optimize(cfg, tree4, impls)
    assert strip_time(a.trace) == strip_time(b.trace)
    assert len(a.trace) == 15 and a.iteration == 15
    assert set(a.trace[0]) == set(TRACE_FIELDS)


def test_small_learning_rate_descends(tree4, impls):
    cfg = RunConfig(iterations=2, lr=1e-4)
    rs = optimize(cfg, tree4, impls)
    assert rs.trace[1]["loss"] < rs.trace[0]["loss"]


def test_four_bit_full_run_reduces_penalties(tree4, impls):
    rs = optimize(RunConfig(), tree4, impls)
    first, last = rs.trace[0], rs.trace[-1]
    assert len(rs.trace) == 300
    assert last["d_loss"] < first["d_loss"] and last["bm_loss"] < first["bm_loss"]
    assert all(np.isfinite([row[k] for k in TRACE_FIELDS]).all() for row in rs.trace)
    # schedule applied: 200 growth steps after the warmup
    assert rs.weights.lambda1 == pytest.approx(0.1 * 1.01**200)


def test_resume_reproduces_trace(tree4, impls, tmp_path):
    cfg = RunConfig(iterations=120, seed=5)
    full = optimize(cfg, tree4, impls)
    part = optimize(cfg, tree4, impls, stop_at=105)
    checkpoint(part, tmp_path / "ck.json")
    resumed = optimize(cfg, tree4, impls, resume=restore(tmp_path / "ck.json", tree4, impls))
    assert strip_time(resumed.trace) == strip_time(full.trace)
    for x, y in zip(resumed.vars.params(), full.vars.params()):
        assert np.array_equal(x.values, y.values)


def test_checkpoint_round_trip_and_guards(tree4, tree8, impls, tmp_path):
    rs = optimize(RunConfig(iterations=3), tree4, impls)
    path = tmp_path / "ck.json"
    checkpoint(rs, path, {"tree": "abc"})
    back = restore(path, tree4, impls)
    assert back.iteration == 3 and back.weights == rs.weights
    for x, y in zip(back.vars.params(), rs.vars.params()):
        assert np.array_equal(x.values, y.values)
    with pytest.raises(ValueError):
        restore(path, tree8, impls)
    text = path.read_text()
    path.write_text(text.replace('"iteration": 3', '"iteration": 4'))
    with pytest.raises(ArtifactError):
        restore(path)
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ArtifactError):
        restore(path)


def test_non_finite_loss_aborts(tree4, impls):
    vars_ = init_vars(tree4, impls)
    vars_.p_aux[0].values[0] = np.nan
    with pytest.raises(OptimizationError) as info:
        optimize(RunConfig(iterations=5), tree4, impls, resume=RunState(vars_, Weights(), 0))
    assert info.value.iteration == 0
    assert len(info.value.last_finite.p_aux) == len(tree4.compressors)


def test_trace_files(tree4, impls, tmp_path):
    rs = optimize(RunConfig(iterations=4), tree4, impls)
    write_trace(rs.trace, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].split(",") == list(TRACE_FIELDS) and len(lines) == 5
    write_trace(rs.trace, tmp_path / "t.json")
    assert len(json.loads((tmp_path / "t.json").read_text())) == 4


def test_wallace_family_runs(impls):
    model = build_tree(4, 4, family="wallace")
    rs = optimize(RunConfig(iterations=3, family="wallace"), model, impls)
    assert rs.iteration == 3


def test_evaluate_matches_trace(tree4, impls):
    cfg = RunConfig(iterations=1)
    rs = optimize(cfg, tree4, impls)
    fresh = init_vars(tree4, impls, seed=cfg.seed)
    parts, _ = evaluate(fresh, TimingModel(tree4, impls), Weights(), cfg.cond())
    assert value(parts.total) == rs.trace[0]["loss"]
