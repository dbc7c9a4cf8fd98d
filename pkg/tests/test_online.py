from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from obrm.instances import GeneratorSpec, gen_example2, gen_example3, gen_random
from obrm.model import Allocation, Instance, TimeStepGraph, allocation_value, edge, empty_instance, is_feasible
from obrm.online import (
    ConfigError,
    OnlineGreedyConfig,
    TraceError,
    TraceEvent,
    all_coin_vectors,
    capacity_spread,
    draw_coins,
    expected_value_exact,
    online_greedy,
    parallel_load_balance,
    random_online_greedy,
    random_online_greedy_mc,
    replay_trace,
)

from conftest import instances


def chain(weights, C=1.0):
    """One server, one job per step."""
    return Instance((C,), [TimeStepGraph(t, (0,), (edge(0, t, 0, w),)) for t, w in enumerate(weights)])


# -- online_greedy ----------------------------------------------------------------


def test_example2_value_and_deactivation():
    run = online_greedy(gen_example2(4, 0.01))
    assert run.value == pytest.approx(0.51, abs=1e-12)
    assert run.deactivated == {0: 1}
    assert run.feasible
    assert [e.timestep for e in run.allocation.server_edges(0)] == [0, 1]


def test_empty_instance():
    run = online_greedy(empty_instance())
    assert run.value == 0 and run.trace == ()


def test_light_edge_keeps_server_active():
    run = online_greedy(chain([0.4]))
    assert run.value == 0.4 and run.deactivated == {}


def test_load_exactly_half_stays_active():
    run = online_greedy(chain([0.25, 0.25, 0.5]))
    assert run.deactivated == {0: 2}
    assert run.value == 1.0 and run.feasible


def test_strict_weights_rejects_before_running():
    with pytest.raises(ConfigError, match="server 0"):
        online_greedy(gen_example3(), OnlineGreedyConfig(strict_weights=True))


def test_unrestricted_run_completes_and_reports_infeasibility():
    run = online_greedy(gen_example3(1.0, 0.01))
    assert run.value == pytest.approx(1.49)
    assert not run.feasible


def test_capacity_guard_keeps_allocation_feasible():
    run = online_greedy(gen_example3(1.0, 0.01), OnlineGreedyConfig(capacity_guard=True))
    assert run.value == pytest.approx(0.49) and run.feasible


def test_alpha_one_deactivates_after_any_positive_acceptance():
    run = online_greedy(chain([0.3, 0.3]), OnlineGreedyConfig(alpha=1.0))
    assert run.value == 0.3 and run.deactivated == {0: 0}


def test_bad_alpha():
    with pytest.raises(ConfigError):
        OnlineGreedyConfig(alpha=0.0)


@settings(max_examples=120, deadline=None)
@given(st.sampled_from([0.25, 0.5, 0.75]).flatmap(lambda a: st.tuples(st.just(a), instances(max_n=3, max_T=5, limit=a))))
def test_threshold_greedy_invariants(case):
    alpha, inst = case
    run = online_greedy(inst, OnlineGreedyConfig(alpha=alpha, strict_weights=True))
    assert run.feasible
    # same outcome with the capacity guard on: the guard never binds under the weight restriction
    guarded = online_greedy(inst, OnlineGreedyConfig(alpha=alpha, capacity_guard=True))
    assert guarded.allocation.edges == run.allocation.edges
    # deactivation happens at the first step where the load exceeds (1 - alpha) C, and never reverses
    for i, cap in enumerate(inst.capacities):
        load = Fraction(0)
        first = None
        for e in run.allocation.server_edges(i):
            assert first is None, "edge accepted after deactivation"
            load += Fraction(e.weight)
            if load > (1 - Fraction(alpha)) * Fraction(cap):
                first = e.timestep
        assert run.deactivated.get(i) == first
    assert replay_trace(inst, run.trace) == run.allocation


# -- random_online_greedy -----------------------------------------------------------


def test_example3_shadow_and_both_coin_outcomes():
    inst = gen_example3(1.0, 0.01)
    heads, shadow = random_online_greedy(inst, coins=[True])
    tails, _ = random_online_greedy(inst, coins=[False])
    assert allocation_value(shadow.B) == pytest.approx(1.49, abs=1e-12)
    assert not is_feasible(inst, shadow.B).ok
    assert [e.weight for e in heads.allocation.edges] == [1.0]
    assert [e.weight for e in tails.allocation.edges] == [pytest.approx(0.49)]
    assert heads.feasible and tails.feasible
    assert expected_value_exact(shadow) == pytest.approx(0.745, abs=1e-12)


def light_instance():
    return gen_random(GeneratorSpec("random_restricted", n=3, T=4, jobs_per_step=3, alpha=0.5, seed=7))


def test_all_light_tails_keeps_everything_heads_keeps_nothing():
    inst = light_instance()
    tails, shadow = random_online_greedy(inst, coins=[False] * inst.n)
    heads, _ = random_online_greedy(inst, coins=[True] * inst.n)
    assert len(shadow.B) > 0
    assert tails.allocation == shadow.B
    assert heads.allocation == Allocation.empty()


def test_expected_value_small_cases():
    _, shadow = random_online_greedy(empty_instance())
    assert expected_value_exact(shadow) == 0
    _, shadow = random_online_greedy(chain([0.8]))
    assert shadow.heavy(0) == (edge(0, 0, 0, 0.8),) and shadow.light(0) == ()
    assert expected_value_exact(shadow) == 0.4


def test_oversize_edges_must_be_removed_first():
    with pytest.raises(ConfigError):
        random_online_greedy(chain([1.5]))


def test_coins_are_per_server_streams():
    assert draw_coins(123, 5)[:3] == draw_coins(123, 3)
    assert draw_coins(123, 64) != draw_coins(124, 64)
    assert random_online_greedy(light_instance(), seed=9)[0] == random_online_greedy(light_instance(), seed=9)[0]


@settings(max_examples=100, deadline=None)
@given(instances(max_n=4, max_T=4, max_jobs=3))
def test_randomized_invariants_over_every_coin_vector(inst):
    runs = [random_online_greedy(inst, coins=c) for c in all_coin_vectors(inst.n)]
    first_run, first = runs[0]
    values = []
    for run, shadow in runs:
        assert run.feasible, run.verdict.describe()
        # B, its split and the deactivation trace do not depend on the coins
        assert shadow.B == first.B and shadow.split == first.split
        assert run.deactivated == first_run.deactivated
        assert [ev for ev in run.trace if ev.kind != "accept"] == [ev for ev in first_run.trace if ev.kind != "accept"]
        assert run.allocation.edges <= shadow.B.edges
        for i, (heavy, light) in shadow.split.items():
            assert len(heavy) <= 1
            assert set(heavy) | set(light) == set(shadow.B.server_edges(i))
            assert set(run.allocation.server_edges(i)) == set(heavy if shadow.coins[i] else light)
        assert replay_trace(inst, run.trace) == run.allocation
        assert replay_trace(inst, run.trace, "shadow") == shadow.B
        values.append(Fraction(run.value))
    mean = sum(values, Fraction(0)) / len(values)
    assert float(mean) == pytest.approx(expected_value_exact(first), abs=1e-12)
    assert expected_value_exact(first) == pytest.approx(allocation_value(first.B) / 2, abs=1e-12)


def test_monte_carlo_example3():
    est = random_online_greedy_mc(gen_example3(1.0, 0.01), 10_000, seed=2024)
    assert abs(est.mean - 0.745) <= 3 * est.stderr
    assert set(est.values) == {allocation_value(Allocation.from_edges([edge(0, 0, 0, 0.49)])), 1.0}


def test_monte_carlo_single_trial_and_errors():
    est = random_online_greedy_mc(gen_example3(1.0, 0.01), 1, seed=5)
    assert est.mean in (pytest.approx(0.49), 1.0)
    with pytest.raises(ValueError):
        random_online_greedy_mc(gen_example3(), 0)


def test_monte_carlo_light_only_single_server():
    inst = chain([0.1, 0.2, 0.15])  # light edges; the server stays active throughout (0.45 <= 0.5)
    est = random_online_greedy_mc(inst, 4000, seed=1)
    total = allocation_value(Allocation.from_edges(inst.edges()))
    assert set(est.values) == {0.0, total}
    assert abs(est.mean - total / 2) <= 3 * est.stderr


# -- parallel_load_balance -------------------------------------------------------------


def parallel(C, steps, n):
    return Instance(
        (C,) * n,
        [TimeStepGraph(t, tuple(range(len(ws))), tuple(edge(i, t, j, w) for j, w in enumerate(ws) for i in range(n)))
         for t, ws in enumerate(steps)],
    )


def test_balanced_small_jobs():
    run = parallel_load_balance(parallel(1.0, [[0.1, 0.1]] * 5, 2))
    assert run.early_return is None and len(run.allocation) == 10
    assert run.allocation.per_server_weight[0] == pytest.approx(0.5)
    assert run.allocation.per_server_weight[1] == pytest.approx(0.5)


def test_single_machine_early_return():
    run = parallel_load_balance(parallel(1.0, [[0.6], [0.6], [0.1]], 1))
    assert run.value == 0.6 and run.early_return == 1
    assert run.trace[-1].kind == "return"


def test_more_jobs_than_machines_skips_without_returning():
    run = parallel_load_balance(parallel(1.0, [[0.3, 0.2, 0.1], [0.05]], 2))
    assert run.early_return is None
    assert sorted(e.weight for e in run.allocation.edges) == [0.05, 0.2, 0.3]
    # the 0.05 job at step 1 goes to the machine holding 0.2
    assert edge(1, 1, 0, 0.05) in run.allocation.edges


def test_non_parallel_rejected():
    with pytest.raises(ConfigError):
        parallel_load_balance(Instance((1.0, 2.0), ()))
    uneven = Instance((1.0, 1.0), (TimeStepGraph(0, (0,), (edge(0, 0, 0, 0.1), edge(1, 0, 0, 0.2))),))
    with pytest.raises(ConfigError):
        parallel_load_balance(uneven)
    partial = Instance((1.0, 1.0), (TimeStepGraph(0, (0,), (edge(0, 0, 0, 0.1),)),))
    with pytest.raises(ConfigError):
        parallel_load_balance(partial)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 80), st.integers(1, 5), st.sampled_from([0.01, 0.05, 0.1]), st.integers(0, 2**32))
def test_capacity_spread_after_every_step(n, T, jobs, eps, seed):
    inst = gen_random(GeneratorSpec("random_parallel", n=n, T=T, jobs_per_step=jobs, epsilon=eps, seed=seed))
    run = parallel_load_balance(inst)
    assert run.feasible
    bound = Fraction(run.params["epsilon"])
    for loads in run.step_loads:
        assert capacity_spread(loads) <= bound
    assert replay_trace(inst, run.trace) == run.allocation


# -- replay_trace ------------------------------------------------------------------------


def test_replay_example2():
    inst = gen_example2(3, 0.01)
    alloc = replay_trace(inst, online_greedy(inst).trace)
    assert allocation_value(alloc) == pytest.approx(0.51, abs=1e-12)


def test_replay_empty_and_mismatch():
    assert replay_trace(gen_example3(), []) == Allocation.empty()
    with pytest.raises(TraceError):
        replay_trace(gen_example3(), [TraceEvent("accept", 0, 0, 0, 0.3)])
    with pytest.raises(TraceError):
        replay_trace(gen_example3(), [TraceEvent("accept", 5, 0, 0, 0.49)])
    ev = TraceEvent("accept", 1, 0, 0, 1.0)
    with pytest.raises(TraceError):
        replay_trace(gen_example3(), [ev, ev])


def test_run_serializes():
    run = online_greedy(gen_example2(2, 0.01))
    d = run.to_dict()
    assert set(d) >= {"algorithm", "value", "edges", "trace", "seed"}
    events = [TraceEvent.from_dict(x) for x in d["trace"]]
    assert replay_trace(gen_example2(2, 0.01), events) == run.allocation
