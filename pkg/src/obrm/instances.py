"""Named example instances, seeded random families, and the JSON instance format.

File layout::

    {"name": "...", "capacities": [1.0, 1.0],
     "steps": [{"t": 0, "jobs": [0, 1],
                "edges": [{"server": 0, "job": 0, "w": 0.5}, ...]}, ...],
     "metadata": {...}}          # optional

Floats are written with ``repr`` precision, so a write/read round trip is
bit-exact.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .model import Edge, Instance, InstanceError, JobId, OBRMError, TimeStepGraph, edge

log = logging.getLogger(__name__)

FAMILIES = ("example1", "example2", "example3", "random_general", "random_restricted", "random_parallel")


class ParseError(OBRMError):
    """Malformed instance file; the message names the line or field."""


# -- named examples --------------------------------------------------------------


def _branch_bits(branch: int | Sequence[bool] | str) -> tuple[bool, bool]:
    if isinstance(branch, str):
        branch = tuple(c in "hH1" for c in branch)
        if len(branch) != 2:
            raise ValueError("branch string must have two characters, e.g. 'HZ'")
    if isinstance(branch, int):
        if not 0 <= branch <= 3:
            raise ValueError(f"branch must be in 0..3, got {branch}")
        return (bool(branch & 1), bool(branch & 2))
    heavy = tuple(bool(b) for b in branch)
    if len(heavy) != 2:
        raise ValueError("branch needs one flag per server")
    return heavy  # type: ignore[return-value]


def gen_example1(C: float = 1.0, epsilon: float = 0.001, branch: int | Sequence[bool] | str = 3) -> Instance:
    """Two servers of capacity C over two steps.

    Step 0 offers each server its own job of weight ``epsilon``. Step 1 offers
    each server a fresh job whose weight is C if that server's branch flag is
    set, else 0. ``branch`` is an int in 0..3 (bit k = server k heavy), a pair
    of flags, or a string such as ``"HZ"``.
    """
    if not (0 < epsilon < C / 10):
        raise ValueError(f"need 0 < epsilon < C/10, got epsilon={epsilon}, C={C}")
    heavy = _branch_bits(branch)
    steps = [
        TimeStepGraph(0, (0, 1), (edge(0, 0, 0, epsilon), edge(1, 0, 1, epsilon))),
        TimeStepGraph(1, (0, 1), tuple(edge(k, 1, k, C if heavy[k] else 0.0) for k in range(2))),
    ]
    tag = "".join("H" if h else "Z" for h in heavy)
    return Instance(
        (C, C), steps, f"example1-{tag}",
        {"family": "example1", "C": C, "epsilon": epsilon, "branch": tag},
    )


def gen_example2(n: int = 2, epsilon: float = 0.01) -> Instance:
    """Tightness family for the deterministic greedy: n unit-capacity servers, four steps, one job per step."""
    if n < 2:
        raise ValueError("example2 needs n >= 2")
    if not 0 < epsilon < 0.5:
        raise ValueError("example2 needs 0 < epsilon < 0.5")
    first = (0.5, 0.5 - epsilon)
    second = (epsilon, 0.0)
    later = (0.5, 0.0)
    steps = []
    for t, (w0, rest) in enumerate((first, second, later, later)):
        steps.append(TimeStepGraph(t, (0,), tuple(edge(i, t, 0, w0 if i == 0 else rest) for i in range(n))))
    return Instance((1.0,) * n, steps, f"example2-n{n}", {"family": "example2", "n": n, "epsilon": epsilon})


def gen_example3(C: float = 1.0, epsilon: float = 0.01) -> Instance:
    """Single server: a light job of weight C/2 - epsilon, then a job of weight C."""
    if not 0 < epsilon < C / 2:
        raise ValueError("example3 needs 0 < epsilon < C/2")
    steps = [
        TimeStepGraph(0, (0,), (edge(0, 0, 0, C / 2 - epsilon),)),
        TimeStepGraph(1, (0,), (edge(0, 1, 0, C),)),
    ]
    return Instance((C,), steps, "example3", {"family": "example3", "C": C, "epsilon": epsilon})


# -- random families ---------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """What to generate.

    ``jobs_per_step`` is an upper bound; each step draws between 1 and that
    many jobs. ``density`` is the probability of each (server, job) edge in
    the general and restricted families. ``capacity_spread`` draws each
    capacity from ``C * [1 - spread, 1 + spread]``.
    """

    family: str
    n: int = 2
    T: int = 3
    C: float = 1.0
    jobs_per_step: int = 2
    seed: int = 0
    alpha: float = 0.5
    epsilon: float = 0.1
    density: float = 0.7
    capacity_spread: float = 0.0
    branch: int = 3

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n < 1 or self.T < 0 or self.jobs_per_step < 1:
            raise ValueError("need n >= 1, T >= 0, jobs_per_step >= 1")
        if self.C <= 0 or not 0 <= self.capacity_spread < 1 or not 0 < self.density <= 1:
            raise ValueError("need C > 0, 0 <= capacity_spread < 1, 0 < density <= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _rounded_below(x: float, bound: Fraction) -> float:
    """Round to 6 decimals, stepping down until the value is within ``bound``."""
    w = round(x, 6)
    while Fraction(w) > bound:
        w = round(w - 1e-6, 6)
    return max(w, 0.0)


def _random_weighted(spec: GeneratorSpec, rng: np.random.Generator, limit: float) -> Instance:
    caps = [
        round(float(spec.C * rng.uniform(1 - spec.capacity_spread, 1 + spec.capacity_spread)), 6)
        if spec.capacity_spread else spec.C
        for _ in range(spec.n)
    ]
    steps = []
    for t in range(spec.T):
        jobs = tuple(range(int(rng.integers(1, spec.jobs_per_step + 1))))
        edges = []
        for j in jobs:
            for i in range(spec.n):
                if rng.random() < spec.density:
                    bound = Fraction(limit) * Fraction(caps[i])
                    edges.append(edge(i, t, j, _rounded_below(float(rng.uniform(0, float(bound))), bound)))
        steps.append(TimeStepGraph(t, jobs, tuple(edges)))
    return Instance(caps, steps)


def _random_parallel(spec: GeneratorSpec, rng: np.random.Generator) -> Instance:
    eps = Fraction(spec.epsilon)
    steps = []
    for t in range(spec.T):
        jobs = tuple(range(int(rng.integers(1, spec.jobs_per_step + 1))))
        edges = []
        for j in jobs:
            w = _rounded_below(float(rng.uniform(spec.epsilon / 2, spec.epsilon)), eps)
            edges.extend(edge(i, t, j, w) for i in range(spec.n))
        steps.append(TimeStepGraph(t, jobs, tuple(edges)))
    return Instance((spec.C,) * spec.n, steps)


def gen_random(spec: GeneratorSpec) -> Instance:
    """Build an instance from ``spec``; identical specs give identical instances.

    ``random_general`` keeps every weight within capacity, ``random_restricted``
    within ``alpha`` times capacity, and ``random_parallel`` gives equal
    capacities and per-job weights in ``[epsilon/2, epsilon]``.
    """
    if spec.family == "example1":
        return gen_example1(spec.C, spec.epsilon, spec.branch)
    if spec.family == "example2":
        return gen_example2(spec.n, spec.epsilon)
    if spec.family == "example3":
        return gen_example3(spec.C, spec.epsilon)

    rng = np.random.default_rng(spec.seed)
    if spec.family == "random_general":
        inst = _random_weighted(spec, rng, 1.0)
        params = {}
    elif spec.family == "random_restricted":
        inst = _random_weighted(spec, rng, spec.alpha)
        params = {"alpha": spec.alpha}
    else:
        inst = _random_parallel(spec, rng)
        params = {"epsilon": spec.epsilon}
    meta = {"family": spec.family, "n": spec.n, "T": spec.T, "C": spec.C,
            "jobs_per_step": spec.jobs_per_step, "seed": spec.seed, **params}
    name = f"{spec.family}-n{spec.n}-T{spec.T}-s{spec.seed}"
    return Instance(inst.capacities, inst.steps, name, meta)


# -- file format ---------------------------------------------------------------------

_TOP = {"name", "capacities", "steps", "metadata"}
_STEP = {"t", "jobs", "edges"}
_EDGE = {"server", "job", "w"}


def instance_to_dict(instance: Instance) -> dict:
    out: dict[str, Any] = {
        "name": instance.name,
        "capacities": list(instance.capacities),
        "steps": [
            {
                "t": s.timestep,
                "jobs": list(s.jobs),
                "edges": [{"server": e.server, "job": e.job.index, "w": e.weight} for e in s.edges],
            }
            for s in instance.steps
        ],
    }
    if instance.metadata:
        out["metadata"] = dict(instance.metadata)
    return out


def _check_keys(obj: Any, allowed: set[str], where: str, strict: bool, required: Sequence[str]) -> None:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object, got {type(obj).__name__}")
    for key in required:
        if key not in obj:
            raise ParseError(f"{where}: missing field {key!r}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        if strict:
            raise ParseError(f"{where}: unknown field(s) {unknown}")
        log.warning("%s: ignoring unknown field(s) %s", where, unknown)


def _number(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _integer(x: Any, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ParseError(f"{where}: expected an integer, got {x!r}")
    return x


def instance_from_dict(data: Any, strict: bool = True) -> Instance:
    _check_keys(data, _TOP, "$", strict, ("capacities", "steps"))
    caps = data["capacities"]
    if not isinstance(caps, list):
        raise ParseError("$.capacities: expected an array")
    capacities = [_number(c, f"$.capacities[{i}]") for i, c in enumerate(caps)]
    for i, c in enumerate(capacities):
        if not math.isfinite(c) or c <= 0:
            raise ParseError(f"$.capacities[{i}]: capacity must be positive, got {c}")
    if not isinstance(data["steps"], list):
        raise ParseError("$.steps: expected an array")
    steps = []
    for k, raw in enumerate(data["steps"]):
        where = f"$.steps[{k}]"
        _check_keys(raw, _STEP, where, strict, ("t", "jobs", "edges"))
        t = _integer(raw["t"], f"{where}.t")
        if t != k:
            raise ParseError(f"{where}.t: steps must be numbered 0..T-1, found {t}")
        if not isinstance(raw["jobs"], list) or not isinstance(raw["edges"], list):
            raise ParseError(f"{where}: jobs and edges must be arrays")
        jobs = tuple(_integer(j, f"{where}.jobs[{q}]") for q, j in enumerate(raw["jobs"]))
        edges = []
        for q, re_ in enumerate(raw["edges"]):
            ew = f"{where}.edges[{q}]"
            _check_keys(re_, _EDGE, ew, strict, ("server", "job", "w"))
            w = _number(re_["w"], f"{ew}.w")
            if w < 0 or not math.isfinite(w):
                raise ParseError(f"{ew}.w: weight must be finite and non-negative, got {w}")
            edges.append(Edge(_integer(re_["server"], f"{ew}.server"), JobId(t, _integer(re_["job"], f"{ew}.job")), w))
        try:
            steps.append(TimeStepGraph(t, jobs, tuple(edges)))
        except OBRMError as exc:
            raise ParseError(f"{where}: {exc}") from exc
    meta = data.get("metadata", {})
    try:
        return Instance(tuple(capacities), tuple(steps), str(data.get("name", "instance")), dict(meta or {}))
    except (OBRMError, InstanceError) as exc:
        raise ParseError(f"$: {exc}") from exc


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1)


def loads_instance(text: str, strict: bool = True) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(data, strict=strict)


def write_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(instance) + "\n")


def read_instance(path: str | Path, strict: bool = True) -> Instance:
    return loads_instance(Path(path).read_text(), strict=strict)
