"""Online algorithms that consume an instance one step at a time.

* :func:`online_greedy` - deterministic greedy with a deactivation threshold
  of ``(1 - alpha) * C_i`` (``alpha = 0.5`` gives the half-capacity rule).
* :func:`random_online_greedy` - one coin per server decides whether the
  server keeps only heavy (``w > C_i / 2``) or only light edges of the
  coin-independent shadow allocation ``B``.
* :func:`parallel_load_balance` - identical machines, jobs go to the least
  loaded free machine; the whole run stops at the first job that does not fit.

Loads are accumulated exactly (see :mod:`obrm.model`), so deactivation and
fit decisions never depend on floating-point summation order.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .greedy import DEFAULT_TIE_BREAK, TieBreakRule, greedy_match
from .model import (
    Allocation,
    Edge,
    FeasibilityVerdict,
    Instance,
    JobId,
    OBRMError,
    StructuralError,
    allocation_value,
    is_feasible,
)

HEADS = True  # keep heavy edges only
TAILS = False  # keep light edges only


class ConfigError(OBRMError):
    """Algorithm preconditions do not hold for the given instance/config."""


class TraceError(OBRMError):
    """A trace does not match the instance it is replayed against."""


@dataclass(frozen=True)
class TraceEvent:
    """One recorded decision.

    ``kind`` is ``accept`` (edge enters the returned allocation), ``shadow``
    (edge enters the shadow allocation B), ``deactivate`` (server leaves the
    active set after step ``t``) or ``return`` (run aborted at step ``t``).
    """

    kind: str
    t: int
    server: int | None = None
    job: int | None = None
    weight: float | None = None

    @classmethod
    def for_edge(cls, kind: str, e: Edge) -> TraceEvent:
        return cls(kind, e.timestep, e.server, e.job.index, e.weight)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> TraceEvent:
        return cls(d["kind"], d["t"], d.get("server"), d.get("job"), d.get("weight"))


@dataclass(frozen=True)
class AlgorithmRun:
    algorithm: str
    allocation: Allocation
    value: float
    trace: tuple[TraceEvent, ...]
    verdict: FeasibilityVerdict
    seed: int | None = None
    deactivated: dict[int, int] = field(default_factory=dict)
    early_return: int | None = None
    step_loads: tuple[tuple[Fraction, ...], ...] = ()
    params: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.verdict.ok

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "value": self.value,
            "seed": self.seed,
            "feasible": self.verdict.ok,
            "params": dict(self.params),
            "edges": [
                {"t": e.timestep, "server": e.server, "job": e.job.index, "w": e.weight}
                for e in self.allocation.sorted_edges()
            ],
            "trace": [ev.to_dict() for ev in self.trace],
        }


@dataclass(frozen=True)
class OnlineGreedyConfig:
    """Settings for :func:`online_greedy`.

    ``capacity_guard`` makes the run refuse any edge that would overflow its
    server. It never changes the outcome when every ``w <= alpha * C_i``;
    it only matters for unrestricted-weight instances, where the unguarded
    algorithm may return an over-capacity allocation.
    """

    alpha: float = 0.5
    strict_weights: bool = False
    capacity_guard: bool = False
    order: TieBreakRule = DEFAULT_TIE_BREAK

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")


def _finish(
    name: str, instance: Instance, accepted: list[Edge], trace: list[TraceEvent], **kw
) -> AlgorithmRun:
    alloc = Allocation.from_edges(accepted)
    return AlgorithmRun(
        algorithm=name,
        allocation=alloc,
        value=allocation_value(alloc),
        trace=tuple(trace),
        verdict=is_feasible(instance, alloc),
        **kw,
    )


def online_greedy(instance: Instance, config: OnlineGreedyConfig | None = None) -> AlgorithmRun:
    config = config or OnlineGreedyConfig()
    alpha = Fraction(config.alpha)
    caps = [Fraction(c) for c in instance.capacities]
    if config.strict_weights:
        for e in instance.edges():
            if Fraction(e.weight) > alpha * caps[e.server]:
                raise ConfigError(
                    f"edge (server {e.server}, job {tuple(e.job)}) has weight {e.weight} "
                    f"> {config.alpha} * C_{e.server} = {config.alpha * instance.capacities[e.server]}"
                )
    threshold = [(1 - alpha) * c for c in caps]
    loads = [Fraction(0)] * instance.n
    active = set(range(instance.n))
    accepted: list[Edge] = []
    trace: list[TraceEvent] = []
    deactivated: dict[int, int] = {}

    def fits(e: Edge) -> bool:
        return loads[e.server] + Fraction(e.weight) <= caps[e.server]

    admissible = fits if config.capacity_guard else None
    for step in instance.steps:
        matching = sorted(greedy_match(step, active, config.order, admissible), key=lambda e: e.server)
        for e in matching:
            accepted.append(e)
            loads[e.server] += Fraction(e.weight)
            trace.append(TraceEvent.for_edge("accept", e))
        for e in matching:
            if loads[e.server] > threshold[e.server]:
                active.discard(e.server)
                deactivated[e.server] = step.timestep
                trace.append(TraceEvent("deactivate", step.timestep, e.server))

    return _finish(
        "onlinegreedy",
        instance,
        accepted,
        trace,
        deactivated=deactivated,
        params={"alpha": config.alpha, "capacity_guard": config.capacity_guard},
    )


# -- randomized heavy/light variant -----------------------------------------


def _mask64(seed: int) -> int:
    return seed & 0xFFFF_FFFF_FFFF_FFFF


def derive_seed(seed: int, *path: object) -> int:
    """Counter-based 64-bit child seed; children of one seed are independent of each other."""
    h = hashlib.blake2b(digest_size=8)
    h.update(_mask64(seed).to_bytes(8, "little"))
    for p in path:
        h.update(b"/" + str(p).encode())
    return int.from_bytes(h.digest(), "little")


def draw_coins(seed: int, n: int) -> tuple[bool, ...]:
    """Coin of server ``i`` depends only on ``(seed, i)``; True means heads (heavy only)."""
    return tuple(bool(derive_seed(seed, "coin", i) & 1) for i in range(n))


def all_coin_vectors(n: int) -> Iterator[tuple[bool, ...]]:
    return itertools.product((HEADS, TAILS), repeat=n)


def is_heavy(e: Edge, capacity: float) -> bool:
    return 2 * Fraction(e.weight) > Fraction(capacity)


@dataclass(frozen=True)
class ShadowPair:
    """Shadow allocation B, the coin-filtered allocation A, and B's heavy/light split."""

    B: Allocation
    A: Allocation
    split: dict[int, tuple[tuple[Edge, ...], tuple[Edge, ...]]]
    coins: tuple[bool, ...]

    def heavy(self, server: int) -> tuple[Edge, ...]:
        return self.split.get(server, ((), ()))[0]

    def light(self, server: int) -> tuple[Edge, ...]:
        return self.split.get(server, ((), ()))[1]


def random_online_greedy(
    instance: Instance,
    seed: int = 0,
    coins: Sequence[bool] | None = None,
    order: TieBreakRule = DEFAULT_TIE_BREAK,
) -> tuple[AlgorithmRun, ShadowPair]:
    """Run the randomized heavy/light greedy.

    ``coins`` overrides the seeded draw (used to enumerate all coin vectors).
    Edges heavier than their server's capacity must be removed beforehand
    (``validate_instance(..., "ignore_oversize")``).
    """
    caps = [Fraction(c) for c in instance.capacities]
    for e in instance.edges():
        if Fraction(e.weight) > caps[e.server]:
            raise ConfigError(f"edge {e} exceeds capacity of server {e.server}; drop oversize edges first")
    if coins is None:
        coins = draw_coins(seed, instance.n)
    coins = tuple(bool(c) for c in coins)
    if len(coins) != instance.n:
        raise ConfigError(f"need {instance.n} coins, got {len(coins)}")

    half = [c / 2 for c in caps]
    shadow_loads = [Fraction(0)] * instance.n
    active = set(range(instance.n))
    shadow: list[Edge] = []
    accepted: list[Edge] = []
    heavy: dict[int, list[Edge]] = {}
    light: dict[int, list[Edge]] = {}
    trace: list[TraceEvent] = []
    deactivated: dict[int, int] = {}

    for step in instance.steps:
        for e in sorted(greedy_match(step, active, order), key=lambda e: e.server):
            i = e.server
            w = Fraction(e.weight)
            shadow.append(e)
            shadow_loads[i] += w
            trace.append(TraceEvent.for_edge("shadow", e))
            if shadow_loads[i] > half[i]:
                active.discard(i)
                deactivated[i] = step.timestep
                trace.append(TraceEvent("deactivate", step.timestep, i))
            e_heavy = w > half[i]
            (heavy if e_heavy else light).setdefault(i, []).append(e)
            if coins[i] == e_heavy:
                accepted.append(e)
                trace.append(TraceEvent.for_edge("accept", e))

    run = _finish(
        "randomgreedy", instance, accepted, trace, seed=seed, deactivated=deactivated,
        params={"coins": "".join("H" if c else "T" for c in coins)},
    )
    split = {
        i: (tuple(heavy.get(i, ())), tuple(light.get(i, ())))
        for i in sorted(set(heavy) | set(light))
    }
    return run, ShadowPair(Allocation.from_edges(shadow), run.allocation, split, coins)


def expected_value_exact(shadow: ShadowPair) -> float:
    """Expected value of A over the coins: half of each server's heavy plus light weight.

    B and its split do not depend on the coins, so this is exact.
    """
    total = Fraction(0)
    for heavy_edges, light_edges in shadow.split.values():
        for e in itertools.chain(heavy_edges, light_edges):
            total += Fraction(e.weight)
    return float(total / 2)


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    trials: int
    values: tuple[float, ...] = field(repr=False, default=())


def random_online_greedy_mc(instance: Instance, trials: int, seed: int = 0) -> MonteCarloEstimate:
    """Sample the randomized greedy with per-trial seeds derived from ``(seed, trial)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    values = tuple(
        random_online_greedy(instance, derive_seed(seed, "trial", k))[0].value for k in range(trials)
    )
    mean = math.fsum(values) / trials
    stderr = statistics.stdev(values) / math.sqrt(trials) if trials > 1 else math.nan
    return MonteCarloEstimate(mean, stderr, trials, values)


# -- parallel machines ---------------------------------------------------------


def parallel_job_weights(instance: Instance) -> list[dict[int, float]]:
    """Per-step ``{job: weight}`` for a parallel instance; ConfigError otherwise.

    Parallel means equal capacities and every job joined to every machine
    by edges of bit-identical weight.
    """
    if len(set(instance.capacities)) > 1:
        raise ConfigError(f"capacities differ: {instance.capacities}")
    out = []
    for step in instance.steps:
        by_job: dict[int, dict[int, float]] = {j: {} for j in step.jobs}
        for e in step.edges:
            by_job[e.job.index][e.server] = e.weight
        weights = {}
        for j, ws in by_job.items():
            if len(ws) != instance.n:
                raise ConfigError(f"step {step.timestep}: job {j} is not joined to every machine")
            if len(set(ws.values())) != 1:
                raise ConfigError(f"step {step.timestep}: job {j} has machine-dependent weights")
            weights[j] = next(iter(ws.values()))
        out.append(weights)
    return out


def parallel_load_balance(instance: Instance) -> AlgorithmRun:
    weights = parallel_job_weights(instance)
    n = instance.n
    cap = Fraction(instance.capacities[0]) if n else Fraction(0)
    loads = [Fraction(0)] * n
    accepted: list[Edge] = []
    trace: list[TraceEvent] = []
    snapshots: list[tuple[Fraction, ...]] = []
    stopped: int | None = None

    for step, step_weights in zip(instance.steps, weights):
        busy: set[int] = set()
        for j, w in sorted(step_weights.items(), key=lambda jw: (-jw[1], jw[0])):
            if len(busy) == n:
                break
            i = min((m for m in range(n) if m not in busy), key=lambda m: (loads[m], m))
            if loads[i] + Fraction(w) <= cap:
                loads[i] += Fraction(w)
                busy.add(i)
                e = step.edge_lookup[(i, j)]
                accepted.append(e)
                trace.append(TraceEvent.for_edge("accept", e))
            else:
                stopped = step.timestep
                trace.append(TraceEvent("return", step.timestep, i, j, w))
                break
        if stopped is not None:
            break
        snapshots.append(tuple(loads))

    eps = max((w for ws in weights for w in ws.values()), default=0.0)
    return _finish(
        "loadbalance", instance, accepted, trace,
        early_return=stopped, step_loads=tuple(snapshots), params={"epsilon": eps},
    )


def capacity_spread(loads: Iterable[Fraction]) -> Fraction:
    loads = list(loads)
    return max(loads) - min(loads) if loads else Fraction(0)


# -- trace replay ----------------------------------------------------------------


def replay_trace(instance: Instance, trace: Iterable[TraceEvent], kind: str = "accept") -> Allocation:
    """Rebuild the allocation from the ``kind`` events of a trace.

    Every replayed edge must exist in ``instance`` with the recorded weight.
    """
    edges = []
    seen = set()
    for ev in trace:
        if ev.kind != kind:
            continue
        e = Edge(ev.server, JobId(ev.t, ev.job), ev.weight)
        try:
            known = instance.has_edge(e)
        except (StructuralError, TypeError):
            known = False
        if not known:
            raise TraceError(f"trace event {ev} does not match any edge of {instance.name!r}")
        if e in seen:
            raise TraceError(f"edge {e} appears twice in trace")
        seen.add(e)
        edges.append(e)
    return Allocation.from_edges(edges)
