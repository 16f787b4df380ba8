"""Gradient-descent driver over the relaxed tree, with checkpoint and trace."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import artifacts
from .engine import ParamTensor, Tape, backward, value
from .impl_lib import ImplSet
from .objectives import Weights, schedule_step, total_loss
from .sta import Conditions, RelaxedVars, TimingModel, analyze
from .tree import SlotModel


class OptimizationError(RuntimeError):
    """Non-finite loss; carries the iteration and the last finite variables."""

    def __init__(self, iteration: int, last_finite: RelaxedVars):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.last_finite = last_finite


@dataclass(frozen=True)
class RunConfig:
    iterations: int = 300
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    restarts: int = 1
    init_bias: float = 0.5
    init_noise: float = 0.01
    family: str = "dadda"
    row_sum_penalty: bool = False
    weights: Weights = field(default_factory=Weights)
    conditions: Conditions = field(default_factory=Conditions)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.family not in ("dadda", "wallace"):
            raise ValueError(f"unknown family {self.family!r}")

    def cond(self) -> Conditions:
        """Operating conditions with the smoothing constant taken from the weights."""
        return replace(self.conditions, gamma=self.weights.gamma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        d["conditions"] = asdict(self.conditions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "weights" in d:
            d["weights"] = Weights.from_dict(d["weights"])
        if "conditions" in d:
            d["conditions"] = Conditions(**d["conditions"])
        return cls(**d)

    @classmethod
    def read(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_vars(model: SlotModel, impls: ImplSet, seed: int = 0, noise: float = 0.01, bias: float = 0.5) -> RelaxedVars:
    rng = np.random.default_rng(seed)
    m_aux = {}
    for key in model.matrix_keys():
        n = model.cells[key].size
        m_aux[key] = ParamTensor(bias * np.eye(n) + rng.normal(0.0, noise, (n, n)) if noise else bias * np.eye(n))
    p_aux = []
    for c in model.compressors:
        k = len(impls[c.kind])
        p_aux.append(ParamTensor(rng.normal(0.0, noise, k) if noise else np.zeros(k)))
    return RelaxedVars(m_aux, p_aux)


class Adam:
    def __init__(self, params: list[ParamTensor], lr=0.05, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.values -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": [x.tolist() for x in self.m], "v": [x.tolist() for x in self.v]}

    def load_state(self, s: dict) -> None:
        self.t = s["t"]
        self.m = [np.array(x, dtype=float).reshape(p.values.shape) for x, p in zip(s["m"], self.params)]
        self.v = [np.array(x, dtype=float).reshape(p.values.shape) for x, p in zip(s["v"], self.params)]


TRACE_FIELDS = ("iteration", "loss", "wns", "tns", "area", "bm_loss", "d_loss", "wall_time")


@dataclass
class RunState:
    """Everything needed to continue a run exactly where it stopped."""

    vars: RelaxedVars
    weights: Weights
    iteration: int
    adam: dict | None = None
    trace: list[dict] = field(default_factory=list)


def evaluate(vars: RelaxedVars, tm: TimingModel, w: Weights, cond: Conditions, row_sums: bool = False):
    """Loss parts of ``vars`` on a fresh tape (the tape is returned with them)."""
    tape = Tape()
    probs = vars.derive(tape)
    state = analyze(tm, probs, replace(cond, gamma=w.gamma))
    return total_loss(probs, state, tm.model, tm.impls, w, row_sums), state


def optimize(config: RunConfig, model: SlotModel, impls: ImplSet, *, resume: RunState | None = None,
             tm: TimingModel | None = None, stop_at: int | None = None, seed: int | None = None) -> RunState:
    """Run the descent loop; ``stop_at`` ends early (for checkpoint/resume)."""
    tm = tm or TimingModel(model, impls)
    cond = config.cond()
    if resume is None:
        rs = RunState(init_vars(model, impls, config.seed if seed is None else seed, config.init_noise, config.init_bias),
                      config.weights, 0)
    else:
        rs = resume
        _check_shapes(rs.vars, model, impls)
    opt = Adam(rs.vars.params(), config.lr, (config.beta1, config.beta2), config.eps)
    if rs.adam is not None:
        opt.load_state(rs.adam)
    end = config.iterations if stop_at is None else min(stop_at, config.iterations)
    while rs.iteration < end:
        t0 = time.perf_counter()
        rs.vars.zero_grad()
        parts, _ = evaluate(rs.vars, tm, rs.weights, cond, config.row_sum_penalty)
        loss = value(parts.total)
        if not math.isfinite(loss):
            raise OptimizationError(rs.iteration, rs.vars.copy())
        backward(parts.total)
        if not all(np.all(np.isfinite(p.grad)) for p in rs.vars.params()):
            raise OptimizationError(rs.iteration, rs.vars.copy())
        opt.step()
        rs.trace.append({
            "iteration": rs.iteration,
            "loss": loss,
            "wns": value(parts.wns),
            "tns": value(parts.tns),
            "area": value(parts.area),
            "bm_loss": value(parts.bm),
            "d_loss": value(parts.d),
            "wall_time": time.perf_counter() - t0,
        })
        rs.weights = schedule_step(rs.weights)
        rs.iteration += 1
    rs.adam = opt.state()
    return rs


def _check_shapes(vars: RelaxedVars, model: SlotModel, impls: ImplSet) -> None:
    keys = model.matrix_keys()
    if set(vars.m_aux) != set(keys):
        raise ValueError("checkpoint cells do not match the tree")
    for k in keys:
        n = model.cells[k].size
        if vars.m_aux[k].shape != (n, n):
            raise ValueError(f"cell {k}: checkpoint shape {vars.m_aux[k].shape} != {(n, n)}")
    if len(vars.p_aux) != len(model.compressors):
        raise ValueError("checkpoint compressor count does not match the tree")
    for c, p in zip(model.compressors, vars.p_aux):
        if p.shape != (len(impls[c.kind]),):
            raise ValueError(f"compressor {c.index}: checkpoint has {p.shape[0]} implementations")


def _vars_to_dict(vars: RelaxedVars) -> dict:
    # a list keeps parameter order stable (Adam moments are stored positionally)
    return {
        "m_aux": [[i, j, t.values.tolist()] for (i, j), t in vars.m_aux.items()],
        "p_aux": [t.values.tolist() for t in vars.p_aux],
    }


def _vars_from_dict(d: dict) -> RelaxedVars:
    m = {(int(i), int(j)): ParamTensor(v) for i, j, v in d["m_aux"]}
    return RelaxedVars(m, [ParamTensor(v) for v in d["p_aux"]])


def checkpoint(rs: RunState, path: str | Path, upstream: dict[str, str] | None = None) -> str:
    payload = {
        "vars": _vars_to_dict(rs.vars),
        "weights": rs.weights.to_dict(),
        "iteration": rs.iteration,
        "adam": rs.adam,
        "trace": rs.trace,
    }
    return artifacts.save(path, "checkpoint", payload, upstream)


def restore(path: str | Path, model: SlotModel | None = None, impls: ImplSet | None = None) -> RunState:
    payload, _, _ = artifacts.load(path, "checkpoint")
    rs = RunState(_vars_from_dict(payload["vars"]), Weights.from_dict(payload["weights"]),
                  payload["iteration"], payload["adam"], payload["trace"])
    if model is not None and impls is not None:
        _check_shapes(rs.vars, model, impls)
    return rs


def write_trace(trace: list[dict], path: str | Path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(trace, indent=1))
        return
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        writer.writeheader()
        writer.writerows(trace)
