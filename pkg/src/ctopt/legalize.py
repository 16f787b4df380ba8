"""Map relaxed interconnections/implementations back to a discrete design."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .impl_lib import ImplSet
from .sta import Probabilities, RelaxedVars
from .tree import SlotModel


def _hungarian_min(cost: np.ndarray):
    """O(n^3) shortest-augmenting-path assignment with dual potentials.

    Returns ``(row_to_col, u, v)`` with ``cost[i, j] - u[i] - v[j] >= 0``
    everywhere and equality on the assignment.
    """
    n = cost.shape[0]
    a = cost.tolist()
    INF = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # column -> row (1-based), 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = a[i0 - 1]
            ui0 = u[i0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign, u[1:], v[1:]


def _has_perfect_matching(adj: list[list[int]], rows: list[int], free_cols: set[int]) -> bool:
    match: dict[int, int] = {}

    def augment(r, seen):
        for c in adj[r]:
            if c in free_cols and c not in seen:
                seen.add(c)
                if c not in match or augment(match[c], seen):
                    match[c] = r
                    return True
        return False

    return all(augment(r, set()) for r in rows)


def hungarian_max(M) -> tuple[int, ...]:
    """Permutation ``pi`` maximizing ``sum(M[u, pi[u]])``.

    Among optimal permutations the lexicographically smallest is returned:
    optimal permutations are exactly the perfect matchings on edges that are
    tight under the optimal dual, which are searched in lexicographic order.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValueError("expected a non-empty square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    n = M.shape[0]
    if n == 1:
        return (0,)
    cost = -M
    _, u, v = _hungarian_min(cost)
    tol = 1e-9 * max(1.0, float(np.abs(M).max()))
    reduced = cost - np.asarray(u)[:, None] - np.asarray(v)[None, :]
    adj = [sorted(np.nonzero(reduced[r] <= tol)[0].tolist()) for r in range(n)]
    perm = []
    free = set(range(n))
    for r in range(n):
        for c in adj[r]:
            if c not in free:
                continue
            free.discard(c)
            if _has_perfect_matching(adj, list(range(r + 1, n)), free):
                perm.append(c)
                break
            free.add(c)
        else:  # pragma: no cover - tolerance pathology
            raise RuntimeError("tight-edge graph lost its perfect matching")
    return tuple(perm)


@dataclass(frozen=True)
class LegalDesign:
    """Discrete wiring (signal -> slot per cell) and implementation choices."""

    perms: dict[tuple[int, int], tuple[int, ...]]
    impl: tuple[int, ...]

    def __post_init__(self):
        for key, perm in self.perms.items():
            if sorted(perm) != list(range(len(perm))):
                raise ValueError(f"cell {key}: mapping is not a bijection")

    def to_dict(self) -> dict:
        return {
            "perms": {f"{i},{j}": list(p) for (i, j), p in sorted(self.perms.items())},
            "impl": list(self.impl),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LegalDesign":
        perms = {tuple(int(x) for x in k.split(",")): tuple(v) for k, v in d["perms"].items()}
        return cls(perms, tuple(d["impl"]))

    def check(self, model: SlotModel, impls: ImplSet) -> None:
        keys = set(model.matrix_keys())
        if set(self.perms) != keys:
            raise ValueError("design cells do not match the tree")
        for key in keys:
            if len(self.perms[key]) != model.cells[key].size:
                raise ValueError(f"cell {key}: permutation size mismatch")
        if len(self.impl) != len(model.compressors):
            raise ValueError("implementation vector length does not match compressor count")
        for c, k in zip(model.compressors, self.impl):
            if not 0 <= k < len(impls[c.kind]):
                raise ValueError(f"compressor {c.index}: implementation index {k} out of range")


def identity_design(model: SlotModel, impl_index: int | list[int] = 0) -> LegalDesign:
    perms = {k: tuple(range(model.cells[k].size)) for k in model.matrix_keys()}
    if isinstance(impl_index, int):
        impl = tuple(impl_index for _ in model.compressors)
    else:
        impl = tuple(impl_index)
    return LegalDesign(perms, impl)


def baseline_design(model: SlotModel, impls: ImplSet) -> LegalDesign:
    """Identity wiring with the monolithic library cell for every compressor."""
    mono = {tag: min(range(len(items)), key=lambda k: len(items[k].source.instances)) for tag, items in impls.impls.items()}
    return identity_design(model, [mono[c.kind] for c in model.compressors])


def _argmax_first(xs) -> int:
    best = 0
    for k in range(1, len(xs)):
        if xs[k] > xs[best]:
            best = k
    return best


def legalize(x: RelaxedVars | Probabilities) -> LegalDesign:
    probs = x.numeric() if isinstance(x, RelaxedVars) else x.values()
    perms = {k: hungarian_max(m) for k, m in probs.M.items()}
    impl = tuple(_argmax_first(pc) for pc in probs.p)
    return LegalDesign(perms, impl)


def embed(design: LegalDesign, model: SlotModel, impls: ImplSet) -> Probabilities:
    """Exact 0/1 matrices and one-hot vectors of a legal design."""
    M = {}
    for key, perm in design.perms.items():
        n = len(perm)
        m = [[0.0] * n for _ in range(n)]
        for u, v in enumerate(perm):
            m[u][v] = 1.0
        M[key] = m
    p = []
    for c, k in zip(model.compressors, design.impl):
        vec = [0.0] * len(impls[c.kind])
        vec[k] = 1.0
        p.append(vec)
    return Probabilities(M, p)


def random_design(model: SlotModel, impls: ImplSet, rng: np.random.Generator) -> LegalDesign:
    perms = {k: tuple(int(x) for x in rng.permutation(model.cells[k].size)) for k in model.matrix_keys()}
    impl = tuple(int(rng.integers(len(impls[c.kind]))) for c in model.compressors)
    return LegalDesign(perms, impl)
