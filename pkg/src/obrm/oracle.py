"""Exact offline optimum by branch and bound, plus an independent brute force.

All arithmetic is exact: the search works on ``Fraction`` loads and values,
the brute force on integers obtained by scaling every (dyadic) float weight
to a common power-of-two denominator.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .model import Allocation, Edge, Instance, OBRMError, TimeStepGraph

StepMatching = frozenset  # frozenset[Edge]


class BudgetError(OBRMError):
    """Enumeration would exceed the allowed size."""


@dataclass(frozen=True)
class SearchBudget:
    max_nodes: int = 5_000_000
    time_limit: float = 60.0  # seconds
    max_step_matchings: int = 200_000

    def __post_init__(self) -> None:
        if self.max_nodes <= 0 or self.time_limit <= 0 or self.max_step_matchings <= 0:
            raise ValueError("search budget limits must be positive")

    @classmethod
    def from_env(cls) -> SearchBudget:
        """Defaults overridable through ``OBRM_MAX_NODES`` and ``OBRM_TIME_LIMIT``."""
        return cls(
            max_nodes=int(os.environ.get("OBRM_MAX_NODES", cls.max_nodes)),
            time_limit=float(os.environ.get("OBRM_TIME_LIMIT", cls.time_limit)),
        )


@dataclass(frozen=True)
class OracleResult:
    opt_value: float
    opt_allocation: Allocation
    nodes_explored: int = 0
    pruned: int = 0
    time_limit_hit: bool = False
    exact_value: Fraction = field(default=Fraction(0), repr=False)

    @property
    def exact(self) -> bool:
        return not self.time_limit_hit

    def to_dict(self) -> dict:
        return {
            "opt_value": self.opt_value,
            "exact": self.exact,
            "nodes_explored": self.nodes_explored,
            "pruned": self.pruned,
            "edges": [
                {"t": e.timestep, "server": e.server, "job": e.job.index, "w": e.weight}
                for e in self.opt_allocation.sorted_edges()
            ],
        }


def enumerate_step_matchings(graph: TimeStepGraph, limit: int | None = None) -> list[StepMatching]:
    """Every matching of the step's bipartite graph (the empty one included), once each."""
    by_job: dict[int, list[Edge]] = {j: [] for j in graph.jobs}
    for e in graph.edges:
        by_job[e.job.index].append(e)
    jobs = [j for j in graph.jobs if by_job[j]]
    out: list[StepMatching] = []

    def extend(k: int, used: frozenset[int], chosen: tuple[Edge, ...]) -> None:
        if k == len(jobs):
            out.append(frozenset(chosen))
            if limit is not None and len(out) > limit:
                raise BudgetError(f"step {graph.timestep} has more than {limit} matchings")
            return
        extend(k + 1, used, chosen)
        for e in by_job[jobs[k]]:
            if e.server not in used:
                extend(k + 1, used | {e.server}, chosen + (e,))

    extend(0, frozenset(), ())
    return out


def _hungarian_min(cost: list[list[Fraction]]) -> list[int]:
    """Min-cost perfect assignment on a square matrix; returns column of each row.

    Shortest augmenting paths with potentials, O(m^3); exact for Fraction input.
    """
    m = len(cost)
    inf = None  # sentinel for +infinity, keeps the arithmetic exact
    u = [Fraction(0)] * (m + 1)
    v = [Fraction(0)] * (m + 1)
    match_col = [0] * (m + 1)  # match_col[j] = row assigned to column j (1-based)
    way = [0] * (m + 1)
    for row in range(1, m + 1):
        match_col[0] = row
        j0 = 0
        minv: list[Fraction | None] = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            delta: Fraction | None = inf
            j1 = 0
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if minv[j] is inf or cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if delta is inf or minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[match_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    assignment = [0] * m
    for j in range(1, m + 1):
        assignment[match_col[j] - 1] = j - 1
    return assignment


def max_weight_matching(edges: Sequence[Edge]) -> tuple[Fraction, frozenset[Edge]]:
    """Maximum-weight matching of a bipartite edge list (weights are non-negative)."""
    if not edges:
        return Fraction(0), frozenset()
    servers = sorted({e.server for e in edges})
    jobs = sorted({e.job.index for e in edges})
    m = max(len(servers), len(jobs))
    row = {s: k for k, s in enumerate(servers)}
    col = {j: k for k, j in enumerate(jobs)}
    weight = [[Fraction(0)] * m for _ in range(m)]
    at: dict[tuple[int, int], Edge] = {}
    for e in edges:
        r, c = row[e.server], col[e.job.index]
        weight[r][c] = Fraction(e.weight)
        at[(r, c)] = e
    # missing edges weigh 0, so a perfect assignment maximizing weight is a max matching
    assignment = _hungarian_min([[-w for w in r] for r in weight])
    picked = frozenset(at[(r, c)] for r, c in enumerate(assignment) if (r, c) in at)
    return sum((Fraction(e.weight) for e in picked), Fraction(0)), picked


def upper_bound(instance: Instance, from_step: int, remaining: Sequence[float] | None = None) -> float:
    """Sum over steps ``t >= from_step`` of the max-weight matching of G(t).

    Capacities are dropped, except that an edge heavier than its server's
    ``remaining`` capacity is left out since no continuation can use it.
    """
    if not 0 <= from_step <= instance.T:
        raise ValueError(f"from_step must lie in [0, {instance.T}]")
    rem = list(instance.capacities if remaining is None else remaining)
    total = Fraction(0)
    for step in instance.steps[from_step:]:
        usable = [e for e in step.edges if Fraction(e.weight) <= Fraction(rem[e.server])]
        total += max_weight_matching(usable)[0]
    return float(total)


@dataclass
class _Candidate:
    edges: StepMatching
    value: Fraction
    loads: tuple[tuple[int, Fraction], ...]


def _candidates(graph: TimeStepGraph, limit: int) -> list[_Candidate]:
    out = []
    for m in enumerate_step_matchings(graph, limit):
        loads = tuple(sorted((e.server, Fraction(e.weight)) for e in m))
        out.append(_Candidate(m, sum((w for _, w in loads), Fraction(0)), loads))
    # heaviest first for strong early incumbents; canonical tiebreak for determinism
    out.sort(key=lambda c: (-c.value, sorted(e.key for e in c.edges)))
    return out


class _Stop(Exception):
    pass


def offline_optimal(
    instance: Instance, budget: SearchBudget | None = None, prune: bool = True
) -> OracleResult:
    """Depth-first search over steps with remaining capacities as state.

    A branch is cut when its value plus an admissible bound on the rest
    (the smaller of the matching relaxation and the total remaining
    capacity) cannot beat the incumbent. If the budget runs out the best
    allocation found so far is returned with ``time_limit_hit`` set.
    """
    budget = budget or SearchBudget.from_env()
    start = time.monotonic()
    cands = [_candidates(step, budget.max_step_matchings) for step in instance.steps]
    suffix = [Fraction(0)] * (instance.T + 1)
    for t in range(instance.T - 1, -1, -1):
        suffix[t] = suffix[t + 1] + (cands[t][0].value if cands[t] else Fraction(0))

    best_value = Fraction(0)
    best_edges: list[Edge] = []
    nodes = 0
    pruned = 0
    hit = False
    chosen: list[StepMatching] = []
    remaining = [Fraction(c) for c in instance.capacities]

    def search(t: int, value: Fraction) -> None:
        nonlocal best_value, best_edges, nodes, pruned
        nodes += 1
        if nodes > budget.max_nodes or (nodes & 1023 == 0 and time.monotonic() - start > budget.time_limit):
            raise _Stop
        if t == instance.T:
            if value > best_value:
                best_value = value
                best_edges = [e for m in chosen for e in m]
            return
        if prune and value + min(suffix[t], sum(remaining)) <= best_value:
            pruned += 1
            return
        for c in cands[t]:
            if any(w > remaining[i] for i, w in c.loads):
                continue
            for i, w in c.loads:
                remaining[i] -= w
            chosen.append(c.edges)
            try:
                search(t + 1, value + c.value)
            finally:
                chosen.pop()
                for i, w in c.loads:
                    remaining[i] += w

    try:
        search(0, Fraction(0))
    except _Stop:
        hit = True
    return OracleResult(
        opt_value=float(best_value),
        opt_allocation=Allocation.from_edges(best_edges),
        nodes_explored=nodes,
        pruned=pruned,
        time_limit_hit=hit,
        exact_value=best_value,
    )


def _subset_matchings(graph: TimeStepGraph) -> list[tuple[Edge, ...]]:
    """All matchings of the step found by filtering every edge subset."""
    edges = list(graph.edges)
    out = []
    for r in range(len(edges) + 1):
        for subset in itertools.combinations(edges, r):
            if len({e.server for e in subset}) == r and len({e.job.index for e in subset}) == r:
                out.append(subset)
    return out


def brute_force_optimal(instance: Instance, limit: int = 10**6) -> OracleResult:
    """Exhaustive cross product of per-step matchings, filtered by capacity. No pruning."""
    for step in instance.steps:
        if len(step.edges) > 20:
            raise BudgetError(f"step {step.timestep} has too many edges for subset enumeration")
    per_step = [_subset_matchings(step) for step in instance.steps]
    size = math.prod(len(m) for m in per_step)
    if size > limit:
        raise BudgetError(f"{size} combinations exceed the brute-force limit {limit}")

    # every float is k / 2**e; scale everything to integers over one power of two
    fracs = [Fraction(c) for c in instance.capacities] + [Fraction(e.weight) for e in instance.edges()]
    scale = max((f.denominator for f in fracs), default=1)
    caps = [int(Fraction(c) * scale) for c in instance.capacities]

    def scaled(e: Edge) -> int:
        return int(Fraction(e.weight) * scale)

    n = instance.n
    options = [[(m, [(e.server, scaled(e)) for e in m]) for m in step] for step in per_step]
    best_value, best_combo = 0, ()
    for combo in itertools.product(*options):
        loads = [0] * n
        for _, contribution in combo:
            for i, w in contribution:
                loads[i] += w
        if any(load > cap for load, cap in zip(loads, caps)):
            continue
        value = sum(loads)
        if value > best_value:
            best_value, best_combo = value, tuple(m for m, _ in combo)
    edges = [e for matching in best_combo for e in matching]
    exact_value = Fraction(best_value, scale)
    return OracleResult(
        opt_value=float(exact_value),
        opt_allocation=Allocation.from_edges(edges),
        nodes_explored=size,
        exact_value=exact_value,
    )
