"""Loss terms and the iteration-dependent weight schedule."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .engine import dot, map_sum, vsum
from .impl_lib import ImplSet
from .sta import Probabilities, TimingState
from .tree import SlotModel


def area(probs: Probabilities, model: SlotModel, impls: ImplSet):
    """Expected total area (um^2)."""
    terms = []
    for c, pc in zip(model.compressors, probs.p):
        terms.append(dot(pc, [impl.area for impl in impls[c.kind]]))
    return vsum(terms)


def _sq_dev(x: float) -> float:
    return (x - 1.0) ** 2


def _d_sq_dev(x: float) -> float:
    return 2.0 * (x - 1.0)


def bm_loss(probs: Probabilities, row_sums: bool = False):
    """Squared deviation of column sums of every M from 1.

    Rows are already normalized by the softmax, so by default the penalty is
    on column sums. ``row_sums=True`` penalizes row sums instead.
    """
    sums = []
    for m in probs.M.values():
        n = len(m)
        lines = m if row_sums else [[m[u][v] for u in range(n)] for v in range(n)]
        sums.extend(vsum(line) for line in lines)
    if not sums:
        return 0.0
    return map_sum(sums, _sq_dev, _d_sq_dev)


def _bimodal(x: float) -> float:
    return x * x * (1.0 - x) ** 2


def _d_bimodal(x: float) -> float:
    return 2.0 * x * (1.0 - x) * (1.0 - 2.0 * x)


def d_loss(probs: Probabilities):
    """Sum of x^2 (1 - x)^2 over every entry of every M and p."""
    entries = [x for m in probs.M.values() for row in m for x in row]
    entries += [x for pc in probs.p for x in pc]
    if not entries:
        return 0.0
    return map_sum(entries, _bimodal, _d_bimodal)


@dataclass(frozen=True)
class Weights:
    t1: float = 1.0
    t2: float = 0.01
    alpha: float = 2.0
    lambda1: float = 0.1
    lambda2: float = 0.5
    gamma: float = 0.01
    t_growth: float = 1.005
    alpha_growth: float = 1.003
    lambda_growth: float = 1.01
    warmup: int = 100
    iteration: int = 0

    def __post_init__(self):
        for name in ("t1", "t2", "alpha", "lambda1", "lambda2", "gamma",
                     "t_growth", "alpha_growth", "lambda_growth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"weight {name} must be positive")
        if self.warmup < 0 or self.iteration < 0:
            raise ValueError("warmup and iteration must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Weights":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown weight keys: {sorted(unknown)}")
        return cls(**d)


def schedule_step(w: Weights) -> Weights:
    """Weights for the next iteration; growth applies once ``iteration >= warmup``."""
    if w.iteration < w.warmup:
        return replace(w, iteration=w.iteration + 1)
    return replace(
        w,
        t1=w.t1 * w.t_growth,
        t2=w.t2 * w.t_growth,
        alpha=w.alpha * w.alpha_growth,
        lambda1=w.lambda1 * w.lambda_growth,
        lambda2=w.lambda2 * w.lambda_growth,
        iteration=w.iteration + 1,
    )


def weights_at(w: Weights, iteration: int) -> Weights:
    while w.iteration < iteration:
        w = schedule_step(w)
    return w


@dataclass
class LossParts:
    total: object
    wns: object
    tns: object
    area: object
    bm: object
    d: object


def total_loss(probs: Probabilities, state: TimingState, model: SlotModel, impls: ImplSet,
               w: Weights, row_sums: bool = False) -> LossParts:
    a = area(probs, model, impls)
    bm = bm_loss(probs, row_sums)
    d = d_loss(probs)
    total = w.t1 * state.wns + w.t2 * state.tns + w.alpha * a + w.lambda1 * d + w.lambda2 * bm
    return LossParts(total, state.wns, state.tns, a, bm, d)
