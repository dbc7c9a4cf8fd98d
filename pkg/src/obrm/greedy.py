"""Descending-weight greedy matching of a single step's graph."""

from __future__ import annotations

import enum
from typing import Callable, Collection, Iterable

from .model import Edge, TimeStepGraph


class TieBreakRule(enum.Enum):
    """Total order used to scan edges; weight always descends first."""

    SERVER_THEN_JOB = "server_then_job"
    JOB_THEN_SERVER = "job_then_server"

    def key(self, e: Edge) -> tuple:
        if self is TieBreakRule.SERVER_THEN_JOB:
            return (-e.weight, e.server, e.job.index)
        return (-e.weight, e.job.index, e.server)


DEFAULT_TIE_BREAK = TieBreakRule.SERVER_THEN_JOB


def scan_order(edges: Iterable[Edge], order: TieBreakRule = DEFAULT_TIE_BREAK) -> list[Edge]:
    return sorted(edges, key=order.key)


def greedy_match(
    graph: TimeStepGraph,
    active: Collection[int],
    order: TieBreakRule = DEFAULT_TIE_BREAK,
    admissible: Callable[[Edge], bool] | None = None,
) -> frozenset[Edge]:
    """Scan the step's edges heaviest first and keep each one that still fits a matching.

    An edge is kept only if its server is in ``active``, neither endpoint is
    already matched, and (when given) ``admissible(edge)`` holds. This is the
    scan-order maximal matching, not a maximum-weight matching.
    """
    matched_servers: set[int] = set()
    matched_jobs: set[int] = set()
    picked = []
    for e in scan_order(graph.edges, order):
        if e.server not in active:
            continue
        if e.server in matched_servers or e.job.index in matched_jobs:
            continue
        if admissible is not None and not admissible(e):
            continue
        matched_servers.add(e.server)
        matched_jobs.add(e.job.index)
        picked.append(e)
    return frozenset(picked)


def blocking_edge(
    e: Edge, matching: Iterable[Edge], order: TieBreakRule = DEFAULT_TIE_BREAK
) -> Edge | None:
    """Return the matched edge that precedes ``e`` in scan order and shares an endpoint with it."""
    for f in matching:
        if (f.server == e.server or f.job.index == e.job.index) and order.key(f) < order.key(e):
            return f
    return None
