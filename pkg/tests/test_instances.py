import json
import logging
from fractions import Fraction

import pytest

from obrm.instances import (
    GeneratorSpec,
    ParseError,
    dumps_instance,
    gen_example1,
    gen_example2,
    gen_example3,
    gen_random,
    instance_to_dict,
    loads_instance,
    read_instance,
    write_instance,
)
from obrm.model import WeightMode, allocation_value, is_feasible, validate_instance
from obrm.online import OnlineGreedyConfig, expected_value_exact, online_greedy, parallel_job_weights, random_online_greedy
from obrm.oracle import brute_force_optimal, offline_optimal


def test_example1_shape_and_branches():
    inst = gen_example1(1.0, 0.001, "HZ")
    assert inst.capacities == (1.0, 1.0) and inst.T == 2
    assert [e.weight for e in inst.steps[1].edges] == [1.0, 0.0]
    assert gen_example1(1.0, 0.001, 1) == inst
    assert gen_example1(1.0, 0.001, (True, False)) == inst
    with pytest.raises(ValueError):
        gen_example1(1.0, 0.2)


def test_example1_heavy_heavy_defeats_greedy():
    eps = 0.001
    inst = gen_example1(1.0, eps, "HH")
    run = online_greedy(inst, OnlineGreedyConfig(capacity_guard=True))
    assert run.value == pytest.approx(2 * eps) and run.feasible
    assert offline_optimal(inst).opt_value == 2.0


def test_example1_zero_zero_optimum():
    eps = 0.001
    inst = gen_example1(1.0, eps, "ZZ")
    assert brute_force_optimal(inst).opt_value == pytest.approx(2 * eps)
    assert offline_optimal(inst).opt_value == brute_force_optimal(inst).opt_value


def test_example1_worst_branch_ratio_for_greedy():
    eps = 0.001
    ratios = []
    for b in range(4):
        inst = gen_example1(1.0, eps, b)
        run = online_greedy(inst, OnlineGreedyConfig(capacity_guard=True))
        ratios.append(run.value / brute_force_optimal(inst).opt_value)
    assert min(ratios) <= 2 * eps + 1e-9


@pytest.mark.parametrize("n", [2, 3, 5, 8])
@pytest.mark.parametrize("eps", [0.01, 0.1, 1e-6])
def test_example2_family_ratio(n, eps):
    inst = gen_example2(n, eps)
    assert validate_instance(inst, WeightMode.ALPHA_BOUNDED, 0.5).ok
    value = online_greedy(inst).value
    opt = offline_optimal(inst)
    assert value == pytest.approx(0.5 + eps, abs=1e-12)
    assert opt.opt_value == pytest.approx(1.5 - eps, abs=1e-12)
    assert value / opt.opt_value == pytest.approx((0.5 + eps) / (1.5 - eps), rel=1e-12)


def test_example2_small_epsilon_ratio_near_third():
    inst = gen_example2(4, 1e-6)
    r = online_greedy(inst).value / offline_optimal(inst).opt_value
    assert abs(r - 1 / 3) < 1e-5


def test_example2_bad_parameters():
    with pytest.raises(ValueError):
        gen_example2(1, 0.1)
    with pytest.raises(ValueError):
        gen_example2(3, 0.5)


@pytest.mark.parametrize("C,eps", [(1.0, 0.01), (4.0, 0.5), (2.0, 0.125)])
def test_example3_values(C, eps):
    inst = gen_example3(C, eps)
    _, shadow = random_online_greedy(inst)
    assert allocation_value(shadow.B) == pytest.approx(1.5 * C - eps, abs=1e-12)
    assert not is_feasible(inst, shadow.B).ok
    assert expected_value_exact(shadow) == pytest.approx(0.75 * C - eps / 2, abs=1e-12)
    assert brute_force_optimal(inst).opt_value == C


def test_random_is_reproducible_and_seed_sensitive():
    spec = GeneratorSpec("random_general", n=3, T=4, jobs_per_step=3, seed=11)
    assert gen_random(spec) == gen_random(spec)
    assert dumps_instance(gen_random(spec)) == dumps_instance(gen_random(spec))
    assert gen_random(spec) != gen_random(GeneratorSpec("random_general", n=3, T=4, jobs_per_step=3, seed=12))


@pytest.mark.parametrize("seed", range(20))
def test_random_families_respect_their_weight_modes(seed):
    for alpha in (0.25, 0.5, 0.75):
        inst = gen_random(GeneratorSpec("random_restricted", n=3, T=4, jobs_per_step=3, alpha=alpha, seed=seed))
        assert validate_instance(inst, WeightMode.ALPHA_BOUNDED, alpha).violations == ()
    general = gen_random(GeneratorSpec("random_general", n=3, T=4, jobs_per_step=3, seed=seed, capacity_spread=0.5))
    assert validate_instance(general, WeightMode.UNRESTRICTED).violations == ()
    par = gen_random(GeneratorSpec("random_parallel", n=3, T=5, jobs_per_step=4, epsilon=0.1, seed=seed))
    weights = parallel_job_weights(par)
    assert all(0 < Fraction(w) <= Fraction(0.1) for ws in weights for w in ws.values())


def test_generated_weights_have_six_decimals():
    inst = gen_random(GeneratorSpec("random_general", n=2, T=3, seed=4))
    assert all(round(e.weight, 6) == e.weight for e in inst.edges())


def test_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec("nope")
    with pytest.raises(ValueError):
        GeneratorSpec("random_general", n=0)
    with pytest.raises(ValueError):
        GeneratorSpec("random_restricted", alpha=1.5)


@pytest.mark.parametrize(
    "inst",
    [gen_example2(3, 0.01), gen_example3(), gen_example1(1.0, 0.001, 2),
     gen_random(GeneratorSpec("random_general", n=3, T=4, jobs_per_step=3, seed=1, capacity_spread=0.3))],
    ids=["ex2", "ex3", "ex1", "random"],
)
def test_round_trip(tmp_path, inst):
    path = tmp_path / "inst.json"
    write_instance(inst, path)
    back = read_instance(path)
    assert back == inst
    assert [e.weight for e in back.edges()] == [e.weight for e in inst.edges()]
    assert back.name == inst.name and dict(back.metadata) == dict(inst.metadata)


def test_negative_capacity_rejected():
    data = instance_to_dict(gen_example3())
    data["capacities"] = [-1.0]
    with pytest.raises(ParseError, match="capacities"):
        loads_instance(json.dumps(data))


def test_negative_weight_rejected_with_location():
    data = instance_to_dict(gen_example3())
    data["steps"][1]["edges"][0]["w"] = -0.5
    with pytest.raises(ParseError, match=r"steps\[1\]\.edges\[0\]\.w"):
        loads_instance(json.dumps(data))


def test_unknown_field_strict_and_lenient(caplog):
    data = instance_to_dict(gen_example3())
    data["steps"][0]["colour"] = "red"
    text = json.dumps(data)
    with pytest.raises(ParseError, match="colour"):
        loads_instance(text)
    with caplog.at_level(logging.WARNING):
        inst = loads_instance(text, strict=False)
    assert inst == gen_example3()
    assert "colour" in caplog.text


def test_malformed_json_reports_line():
    with pytest.raises(ParseError, match="line 3"):
        loads_instance('{\n "capacities": [1.0],\n "steps": [,]\n}')


def test_structural_problems_in_file():
    data = instance_to_dict(gen_example3())
    data["steps"][0]["t"] = 4
    with pytest.raises(ParseError, match="numbered"):
        loads_instance(json.dumps(data))
    data = instance_to_dict(gen_example3())
    data["steps"][0]["edges"][0]["server"] = 7
    with pytest.raises(ParseError):
        loads_instance(json.dumps(data))
    data = instance_to_dict(gen_example3())
    del data["steps"][0]["jobs"]
    with pytest.raises(ParseError, match="jobs"):
        loads_instance(json.dumps(data))
