from __future__ import annotations

from hypothesis import strategies as st

from obrm.model import Instance, TimeStepGraph, edge


@st.composite
def instances(draw, max_n=3, max_T=3, max_jobs=3, limit=1.0, capacities=None):
    """Small random instances; every weight is a 6-decimal value <= limit * C_i."""
    n = draw(st.integers(1, max_n))
    caps = capacities or [draw(st.sampled_from([1.0, 2.0, 0.75])) for _ in range(n)]
    n = len(caps)
    T = draw(st.integers(0, max_T))
    steps = []
    for t in range(T):
        jobs = tuple(range(draw(st.integers(0, max_jobs))))
        edges = []
        for j in jobs:
            for i in range(n):
                if draw(st.booleans()):
                    top = int(limit * caps[i] * 1_000_000)
                    edges.append(edge(i, t, j, draw(st.integers(0, top)) / 1_000_000))
        steps.append(TimeStepGraph(t, jobs, tuple(edges)))
    return Instance(tuple(caps), tuple(steps), "hypothesis")


ACCEPTANCE_LINES: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    """Log one acceptance criterion outcome; the lines are echoed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
