"""Problem data model: servers, per-step job graphs, allocations, feasibility.

Weights are stored as Python floats. Every capacity comparison is done in
exact rational arithmetic over those floats (``fractions.Fraction`` converts a
float without rounding), so ``load <= capacity`` means exactly that, with no
tolerance and no dependence on summation order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence


class OBRMError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(OBRMError):
    """An allocation or instance references something that does not exist."""


class InstanceError(OBRMError):
    """An instance violates a hard constraint (bad capacity, negative weight...)."""


def exact(x: float) -> Fraction:
    return Fraction(x)


def exact_sum(values: Iterable[float]) -> Fraction:
    total = Fraction(0)
    for v in values:
        total += Fraction(v)
    return total


class JobId(NamedTuple):
    timestep: int
    index: int


@dataclass(frozen=True, order=True)
class Edge:
    """Edge (server, job) with the resource weight the job consumes on it."""

    server: int
    job: JobId
    weight: float

    @property
    def timestep(self) -> int:
        return self.job.timestep

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.job.timestep, self.server, self.job.index)


def edge(server: int, t: int, job: int, weight: float) -> Edge:
    """Shorthand constructor."""
    return Edge(server, JobId(t, job), float(weight))


@dataclass(frozen=True)
class TimeStepGraph:
    timestep: int
    jobs: tuple[int, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "edges", tuple(self.edges))
        if len(set(self.jobs)) != len(self.jobs):
            raise StructuralError(f"step {self.timestep}: duplicate job index")
        jobs = set(self.jobs)
        seen = set()
        for e in self.edges:
            if e.job.timestep != self.timestep:
                raise StructuralError(
                    f"step {self.timestep}: edge {e} carries timestep {e.job.timestep}"
                )
            if e.job.index not in jobs:
                raise StructuralError(f"step {self.timestep}: edge {e} references unknown job")
            pair = (e.server, e.job.index)
            if pair in seen:
                raise StructuralError(f"step {self.timestep}: duplicate edge {pair}")
            seen.add(pair)
            if not math.isfinite(e.weight):
                raise InstanceError(f"step {self.timestep}: non-finite weight on {e}")

    @cached_property
    def edge_lookup(self) -> dict[tuple[int, int], Edge]:
        return {(e.server, e.job.index): e for e in self.edges}


@dataclass(frozen=True)
class Instance:
    """Server capacities plus the ordered sequence of per-step job graphs."""

    capacities: tuple[float, ...]
    steps: tuple[TimeStepGraph, ...]
    name: str = "instance"
    metadata: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "capacities", tuple(float(c) for c in self.capacities))
        object.__setattr__(self, "steps", tuple(self.steps))
        for i, c in enumerate(self.capacities):
            if not math.isfinite(c) or c <= 0:
                raise InstanceError(f"server {i}: capacity must be positive and finite, got {c}")
        n = len(self.capacities)
        for t, step in enumerate(self.steps):
            if step.timestep != t:
                raise StructuralError(f"steps must be indexed 0..T-1, found {step.timestep} at {t}")
            for e in step.edges:
                if not 0 <= e.server < n:
                    raise StructuralError(f"step {t}: edge {e} references unknown server")
                if e.weight < 0:
                    raise InstanceError(f"step {t}: negative weight on {e}")

    @property
    def n(self) -> int:
        return len(self.capacities)

    @property
    def T(self) -> int:
        return len(self.steps)

    def edges(self) -> list[Edge]:
        return [e for step in self.steps for e in step.edges]

    def has_edge(self, e: Edge) -> bool:
        if not 0 <= e.timestep < self.T:
            return False
        found = self.steps[e.timestep].edge_lookup.get((e.server, e.job.index))
        return found is not None and found.weight == e.weight


@dataclass(frozen=True)
class Allocation:
    """A set of accepted edges, with per-server totals and per-step structure.

    Build with :meth:`from_edges`; the three representations are redundant
    and :func:`check_consistency` recomputes them.
    """

    edges: frozenset[Edge]
    per_server_weight: Mapping[int, float]
    per_step: Mapping[int, frozenset[Edge]]

    @classmethod
    def from_edges(cls, edges: Iterable[Edge]) -> Allocation:
        edges = frozenset(edges)
        loads: dict[int, Fraction] = {}
        steps: dict[int, set[Edge]] = {}
        for e in edges:
            loads[e.server] = loads.get(e.server, Fraction(0)) + Fraction(e.weight)
            steps.setdefault(e.timestep, set()).add(e)
        return cls(
            edges=edges,
            per_server_weight={i: float(w) for i, w in sorted(loads.items())},
            per_step={t: frozenset(s) for t, s in sorted(steps.items())},
        )

    @classmethod
    def empty(cls) -> Allocation:
        return cls.from_edges(())

    def __len__(self) -> int:
        return len(self.edges)

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges, key=lambda e: e.key)

    def server_edges(self, server: int) -> list[Edge]:
        return sorted((e for e in self.edges if e.server == server), key=lambda e: e.key)

    def exact_load(self, server: int) -> Fraction:
        return exact_sum(e.weight for e in self.edges if e.server == server)

    def union(self, other: Allocation) -> Allocation:
        return Allocation.from_edges(self.edges | other.edges)


def allocation_value(alloc: Allocation) -> float:
    """Total weight of the allocation, correctly rounded."""
    return math.fsum(e.weight for e in alloc.edges)


def check_consistency(alloc: Allocation) -> None:
    """Raise StructuralError unless per-server totals and per-step sets match ``edges``."""
    rebuilt = Allocation.from_edges(alloc.edges)
    if dict(rebuilt.per_server_weight) != dict(alloc.per_server_weight):
        raise StructuralError("per_server_weight disagrees with edges")
    if dict(rebuilt.per_step) != {t: s for t, s in alloc.per_step.items() if s}:
        raise StructuralError("per_step disagrees with edges")


class ViolationKind(str, enum.Enum):
    MATCHING_SERVER = "matching_server"
    MATCHING_JOB = "matching_job"
    CAPACITY = "capacity"


@dataclass(frozen=True)
class FeasibilityVerdict:
    ok: bool
    kind: ViolationKind | None = None
    timestep: int | None = None
    server: int | None = None
    job: JobId | None = None
    load: float | None = None

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "feasible"
        if self.kind is ViolationKind.CAPACITY:
            return f"capacity violation at server {self.server}: load {self.load!r}"
        where = f"server {self.server}" if self.kind is ViolationKind.MATCHING_SERVER else f"job {self.job}"
        return f"{self.kind.value} violation at step {self.timestep}, {where}"


FEASIBLE = FeasibilityVerdict(True)


def is_feasible(instance: Instance, alloc: Allocation) -> FeasibilityVerdict:
    """Check the per-step matching constraints, then every server's capacity.

    Matching violations are reported first (earliest step, then smallest
    server/job); capacity violations name the smallest overloaded server.
    Edges that are not part of ``instance`` raise StructuralError.
    """
    check_consistency(alloc)
    for e in alloc.edges:
        if not 0 <= e.server < instance.n or not instance.has_edge(e):
            raise StructuralError(f"edge {e} is not an edge of instance {instance.name!r}")

    for t in sorted(alloc.per_step):
        servers: set[int] = set()
        jobs: set[int] = set()
        for e in sorted(alloc.per_step[t], key=lambda e: e.key):
            if e.server in servers:
                return FeasibilityVerdict(False, ViolationKind.MATCHING_SERVER, t, e.server, e.job)
            if e.job.index in jobs:
                return FeasibilityVerdict(False, ViolationKind.MATCHING_JOB, t, e.server, e.job)
            servers.add(e.server)
            jobs.add(e.job.index)

    for i in sorted(alloc.per_server_weight):
        load = alloc.exact_load(i)
        if load > Fraction(instance.capacities[i]):
            return FeasibilityVerdict(False, ViolationKind.CAPACITY, server=i, load=float(load))
    return FEASIBLE


class WeightMode(str, enum.Enum):
    UNRESTRICTED = "unrestricted"
    ALPHA_BOUNDED = "alpha_bounded"
    IGNORE_OVERSIZE = "ignore_oversize"


@dataclass(frozen=True)
class ValidationReport:
    mode: WeightMode
    violations: tuple[Edge, ...] = ()
    removed: tuple[Edge, ...] = ()
    instance: Instance | None = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _exceeds(e: Edge, capacity: float, alpha: float = 1.0) -> bool:
    return Fraction(e.weight) > Fraction(alpha) * Fraction(capacity)


def validate_instance(
    instance: Instance, mode: WeightMode | str = WeightMode.UNRESTRICTED, alpha: float | None = None
) -> ValidationReport:
    """Check edge weights against capacities.

    ``unrestricted`` flags edges heavier than their server's capacity,
    ``alpha_bounded`` flags edges heavier than ``alpha`` times capacity, and
    ``ignore_oversize`` returns a copy of the instance without the
    over-capacity edges (``report.instance``) together with the removed edges.
    """
    mode = WeightMode(mode)
    # Hard errors (non-positive capacity, negative weight) are raised by Instance itself.
    if mode is WeightMode.ALPHA_BOUNDED:
        if alpha is None or not 0 < alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        bad = tuple(e for e in instance.edges() if _exceeds(e, instance.capacities[e.server], alpha))
        return ValidationReport(mode, violations=bad)

    oversize = tuple(e for e in instance.edges() if _exceeds(e, instance.capacities[e.server]))
    if mode is WeightMode.UNRESTRICTED:
        return ValidationReport(mode, violations=oversize)

    drop = set(oversize)
    steps = [
        TimeStepGraph(s.timestep, s.jobs, tuple(e for e in s.edges if e not in drop))
        for s in instance.steps
    ]
    cleaned = Instance(instance.capacities, steps, instance.name, dict(instance.metadata))
    return ValidationReport(mode, removed=oversize, instance=cleaned)


def max_weight_ratio(instance: Instance) -> float:
    """Largest w(i,j)/C_i over all edges (0 for an edgeless instance)."""
    return max((e.weight / instance.capacities[e.server] for e in instance.edges()), default=0.0)


def empty_instance(capacities: Sequence[float] = (1.0,), name: str = "empty") -> Instance:
    return Instance(tuple(capacities), (), name)
