"""End-to-end helpers shared by the command line and the acceptance suite."""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from importlib.resources import files
from pathlib import Path

from .golden import GoldenReport, golden_area, golden_sta
from .impl_lib import DEFAULT_CATALOG, ImplSet, characterize_all, load_catalog
from .legalize import LegalDesign, legalize
from .liberty import TimingLibrary, read_liberty
from .objectives import Weights
from .engine import value
from .optimizer import RunConfig, RunState, evaluate, optimize
from .sta import TimingModel
from .tree import SlotModel

LIBERTY_ENV = "CTOPT_LIBERTY"


def default_liberty_path() -> Path:
    env = os.environ.get(LIBERTY_ENV)
    return Path(env) if env else Path(str(files("ctopt") / "data" / "nangate45_subset.lib"))


def load_library(path: str | Path | None = None) -> TimingLibrary:
    return read_liberty(path or default_liberty_path())


def default_impls(lib: TimingLibrary | None = None, catalog: str | Path = DEFAULT_CATALOG) -> ImplSet:
    return characterize_all(load_catalog(catalog), lib or load_library())


@dataclass
class RunResult:
    state: RunState
    design: LegalDesign
    report: GoldenReport
    area: float
    seed: int
    relaxed: float = float("nan")

    @property
    def delay(self) -> float:
        return self.report.delay

    def objective(self, w: Weights) -> float:
        return w.t1 * self.report.wns + w.t2 * self.report.tns + w.alpha * self.area

    def gap(self, w: Weights) -> float:
        """Exact objective of the legal design minus the relaxed objective at convergence."""
        return self.objective(w) - self.relaxed


def relaxed_objective(state: RunState, tm: TimingModel, w: Weights, cond) -> float:
    """Timing and area part of the smooth objective at the final relaxed variables."""
    parts, _ = evaluate(state.vars, tm, w, cond)
    return w.t1 * value(parts.wns) + w.t2 * value(parts.tns) + w.alpha * value(parts.area)


def run(config: RunConfig, model: SlotModel, impls: ImplSet, tm: TimingModel | None = None) -> RunResult:
    """Optimize from ``config.restarts`` seeds, legalize each, keep the best by exact objective."""
    tm = tm or TimingModel(model, impls)
    cond = config.cond()
    best = None
    for r in range(config.restarts):
        seed = config.seed + r
        state = optimize(config, model, impls, tm=tm, seed=seed)
        design = legalize(state.vars)
        res = RunResult(state, design, golden_sta(design, model, impls, cond), golden_area(design, model, impls), seed,
                        relaxed_objective(state, tm, config.weights, cond))
        if best is None or res.objective(config.weights) < best.objective(config.weights):
            best = res
    return best


def frontier(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated (delay, area) points, sorted by delay, duplicates merged."""
    uniq = sorted(set(points))
    keep = []
    for p in uniq:
        dominated = any(q[0] <= p[0] and q[1] <= p[1] and q != p for q in uniq)
        if not dominated:
            keep.append(p)
    return keep


def _sweep_job(args):
    config, model_dict, impls_dict = args
    model = SlotModel.from_dict(model_dict)
    impls = ImplSet.from_dict(impls_dict)
    res = run(config, model, impls)
    return {"alpha": config.weights.alpha, "seed": config.seed, "delay": res.delay, "area": res.area,
            "wns": res.report.wns, "tns": res.report.tns, "gap": res.gap(config.weights)}


def sweep(config: RunConfig, model: SlotModel, impls: ImplSet, alphas, seeds, jobs: int = 1) -> list[dict]:
    """One run per (alpha, seed); independent runs go to separate processes when ``jobs > 1``."""
    tasks = []
    for a in alphas:
        for s in seeds:
            cfg = replace(config, seed=int(s), weights=replace(config.weights, alpha=float(a)))
            tasks.append((cfg, model.to_dict(), impls.to_dict()))
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_job, tasks))
    else:
        rows = [_sweep_job(t) for t in tasks]
    front = set(frontier([(r["delay"], r["area"]) for r in rows]))
    for r in rows:
        r["frontier"] = (r["delay"], r["area"]) in front
    return rows

