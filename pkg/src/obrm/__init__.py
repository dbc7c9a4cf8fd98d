"""Online budgeted repeated matching: algorithms, exact oracle, instance generators."""

from .greedy import TieBreakRule, greedy_match
from .instances import (
    GeneratorSpec,
    gen_example1,
    gen_example2,
    gen_example3,
    gen_random,
    read_instance,
    write_instance,
)
from .model import (
    Allocation,
    Edge,
    FeasibilityVerdict,
    Instance,
    JobId,
    TimeStepGraph,
    WeightMode,
    allocation_value,
    edge,
    is_feasible,
    validate_instance,
)
from .online import (
    AlgorithmRun,
    OnlineGreedyConfig,
    ShadowPair,
    expected_value_exact,
    online_greedy,
    parallel_load_balance,
    random_online_greedy,
    random_online_greedy_mc,
    replay_trace,
)
from .oracle import SearchBudget, brute_force_optimal, enumerate_step_matchings, offline_optimal, upper_bound

__version__ = "0.1.0"
