"""Command line entry point: ``obrm {gen,run,oracle,ratio,sweep}``.

Exit codes: 0 success, 1 bound violation or infeasible allocation in a
feasibility-required run, 2 usage/input error or failed sweep cells, 3 oracle
budget exhausted (result is only a lower bound).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ALGORITHMS, ratio, run_algorithm, sweep
from .instances import FAMILIES, GeneratorSpec, ParseError, dumps_instance, gen_random, read_instance
from .model import OBRMError
from .oracle import SearchBudget, offline_optimal

log = logging.getLogger("obrm")


def _emit(obj: object, out: str | None) -> None:
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=1)
    if out and out != "-":
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _budget(args: argparse.Namespace) -> SearchBudget:
    base = SearchBudget.from_env()
    return SearchBudget(
        max_nodes=args.max_nodes or base.max_nodes,
        time_limit=args.time_limit or base.time_limit,
    )


def _load(args: argparse.Namespace):
    return read_instance(args.input, strict=not args.lenient)


def cmd_gen(args: argparse.Namespace) -> int:
    spec = GeneratorSpec(
        family=args.family, n=args.n, T=args.T, C=args.C, jobs_per_step=args.jobs_per_step,
        seed=args.seed, alpha=args.alpha, epsilon=args.epsilon, density=args.density, branch=args.branch,
    )
    _emit(dumps_instance(gen_random(spec)), args.output)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    instance = _load(args)
    run, shadow = run_algorithm(
        instance, args.alg, alpha=args.alpha, seed=args.seed,
        capacity_guard=args.guard, strict_weights=args.strict,
    )
    out = run.to_dict()
    if shadow is not None:
        out["shadow_edges"] = [
            {"t": e.timestep, "server": e.server, "job": e.job.index, "w": e.weight}
            for e in shadow.B.sorted_edges()
        ]
    _emit(out, args.output)
    required = args.alg != "onlinegreedy" or args.guard or args.strict
    return 1 if required and not run.feasible else 0


def cmd_oracle(args: argparse.Namespace) -> int:
    result = offline_optimal(_load(args), _budget(args))
    _emit(result.to_dict(), args.output)
    return 3 if result.time_limit_hit else 0


def cmd_ratio(args: argparse.Namespace) -> int:
    report = ratio(
        _load(args), args.alg, alpha=args.alpha, seed=args.seed, capacity_guard=args.guard,
        strict_weights=args.strict, mc_trials=args.mc_trials, budget=_budget(args),
    )
    _emit(report.to_dict(), args.output)
    return 0 if report.ok else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    result = sweep(
        args.family, args.grid, args.seeds, algorithms=args.alg or None, workers=args.workers,
        budget=_budget(args), mc_trials=args.mc_trials,
    )
    _emit(result.to_csv(), args.output)
    for alg, worst in sorted(result.summary.items()):
        log.info("%s: min ratio %.6f over %d rows", alg, worst, len(result.rows))
    for row, msg in result.violations:
        log.error("violation on %s: %s", row.report.instance_name, msg)
    for row in result.errors:
        log.error("cell %s failed: %s", row.spec, row.error)
    if result.violations:
        return 1
    return 2 if result.errors else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obrm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def budget_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--max-nodes", type=int, default=None, help="oracle node budget (env OBRM_MAX_NODES)")
        sp.add_argument("--time-limit", type=float, default=None, help="oracle seconds (env OBRM_TIME_LIMIT)")

    def alg_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--alg", choices=ALGORITHMS, required=True)
        sp.add_argument("--alpha", type=float, default=0.5)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--guard", action="store_true", help="never overflow a server (onlinegreedy)")
        sp.add_argument("--strict", action="store_true", help="reject edges above alpha*C (onlinegreedy)")

    def input_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("-i", "--input", required=True)
        sp.add_argument("--lenient", action="store_true", help="warn on unknown fields instead of failing")
        sp.add_argument("-o", "--output", default=None)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("--n", type=int, default=2)
    g.add_argument("--T", type=int, default=3)
    g.add_argument("--C", type=float, default=1.0)
    g.add_argument("--jobs-per-step", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--alpha", type=float, default=0.5)
    g.add_argument("--epsilon", type=float, default=0.01)
    g.add_argument("--density", type=float, default=0.7)
    g.add_argument("--branch", type=int, default=3, help="example1 branch 0..3 (bit k: server k heavy)")
    g.add_argument("-o", "--output", default=None)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one algorithm on an instance")
    alg_opts(r)
    input_opts(r)
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="exact offline optimum")
    input_opts(o)
    budget_opts(o)
    o.set_defaults(func=cmd_oracle)

    q = sub.add_parser("ratio", help="algorithm value vs OPT with bound checks")
    alg_opts(q)
    input_opts(q)
    budget_opts(q)
    q.add_argument("--mc-trials", type=int, default=0, help="Monte Carlo cross-check (randomgreedy)")
    q.set_defaults(func=cmd_ratio)

    s = sub.add_parser("sweep", help="ratio reports over a parameter grid, as CSV")
    s.add_argument("--family", choices=FAMILIES, required=True)
    s.add_argument("--grid", default="", help='e.g. "n=2,3;T=2,3,4;jobs_per_step=3"')
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--alg", choices=ALGORITHMS, action="append")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--mc-trials", type=int, default=0)
    s.add_argument("-o", "--output", default=None)
    budget_opts(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ParseError, OBRMError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
