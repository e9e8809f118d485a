"""Command-line front end: solve, sweep, validate, trace.

Exit status: 0 on success (a solver iteration cap only sets the cap_hit
column), 1 if a validation criterion fails, 2 on a bad flag or scenario
file, 3 if the scenario is physically infeasible.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bcd import STRATEGIES, fly_hover_trajectory, solve
from .channel import channel_gains
from .eta_solver import optimal_eta
from .outputs import SUMMARY_COLUMNS, summary_row, write_csv, write_solve_outputs, write_trace
from .scenario import (ConfigError, InfeasibleScenarioError, dbm_to_watts, load_scenario,
                       reference_scenario, desk_scenario, slots_for)
from .theta_solver import optimal_theta

log = logging.getLogger("uav_aircomp")

BUILTIN = {"desk": desk_scenario, "reference": reference_scenario}
INT_PARAMS = {"num_sensors", "num_slots", "max_bcd_iters"}


def build_scenario(name: str, seed: int, **params):
    """A built-in scenario name or a YAML path, with optional parameter overrides."""
    if name in BUILTIN:
        try:
            return BUILTIN[name](seed, **params)
        except TypeError as exc:
            raise ConfigError(f"unknown scenario parameter: {exc}") from None
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"no scenario file {name!r} (built-ins: {', '.join(BUILTIN)})")
    overrides = dict(params)
    if "noise_dbm" in overrides:
        overrides["noise_power"] = dbm_to_watts(overrides.pop("noise_dbm"))
    if "num_sensors" in overrides:
        raise ConfigError("num_sensors can only be swept on built-in scenarios")
    if "mission_duration" in overrides:
        slot = overrides.get("slot_length", load_scenario(path, seed).slot_length)
        overrides["num_slots"] = slots_for(overrides.pop("mission_duration"), slot)
    return load_scenario(path, seed, **overrides)


def parse_values(text: str) -> list[float]:
    """'lo:hi:step' (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step == 0 or (hi - lo) / step < 0:
                raise ValueError
            count = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 12) for i in range(count)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --values {text!r}; expected lo:hi:step or a comma list") from None


def _strategies(value: str | None) -> list[str]:
    if value in (None, "all"):
        return list(STRATEGIES)
    names = [v.strip() for v in value.split(",")]
    unknown = [n for n in names if n not in STRATEGIES]
    if unknown:
        raise ConfigError(f"unknown strategy {unknown[0]!r}; choose from {', '.join(STRATEGIES)} or all")
    return names


# -- subcommands ------------------------------------------------------------------------------

def cmd_solve(args) -> int:
    scenario = build_scenario(args.scenario, args.seed)
    names = _strategies(args.strategy)
    out = Path(args.out)
    for name in names:
        result = solve(scenario, name)
        target = out if len(names) == 1 else out / name
        write_solve_outputs(result, scenario, target)
        if result.cap_hit:
            log.warning("%s stopped on an iteration cap; see cap_hit in summary.csv", name)
        print(f"{name}: time-averaged MSE {result.mse:.6e} after {result.iterations} iterations "
              f"({result.wall_time:.1f} s) -> {target}")
    return 0


def _sweep_point(task):
    name, seed, strategy, param, value = task
    scenario = build_scenario(name, seed, **{param: value})
    result = solve(scenario, strategy)
    return summary_row(result, scenario), result.wall_time


def cmd_sweep(args) -> int:
    param = args.param
    values = parse_values(args.values)
    if param in INT_PARAMS:
        values = [int(round(v)) for v in values]
    names = _strategies(args.strategies or args.strategy)
    # fail fast on a bad parameter before starting the pool
    build_scenario(args.scenario, args.seed, **{param: values[0]})
    tasks = [(args.scenario, args.seed, s, param, v) for s in names for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    out = Path(args.out)
    tag = f"sweep {param} scenario={args.scenario} seed={args.seed}"
    write_csv(out / "sweep.csv", ("param", "value") + SUMMARY_COLUMNS,
              [(param, t[4]) + row for t, (row, _) in zip(tasks, results)], tag)
    write_csv(out / "sweep_timing.csv", ("param", "value", "strategy", "wall_seconds"),
              [(param, t[4], t[2], wall) for t, (_, wall) in zip(tasks, results)], tag)
    for t, (row, wall) in zip(tasks, results):
        print(f"{t[2]:>10} {param}={t[4]:<10g} MSE {row[5]:.6e} iterations {row[6]} ({wall:.1f} s)")
    return 0


def cmd_validate(args) -> int:
    from .acceptance import CRITERIA, run_suite

    if args.suite != "acceptance":
        raise ConfigError(f"unknown suite {args.suite!r}")
    selected = None
    if args.criteria:
        try:
            selected = [int(c) for c in args.criteria.split(",")]
        except ValueError:
            raise ConfigError(f"bad --criteria {args.criteria!r}") from None
        if any(c not in CRITERIA for c in selected):
            raise ConfigError(f"criteria must be in {sorted(CRITERIA)}")
    results = run_suite(selected, jobs=args.jobs, mc_samples=args.mc_samples)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    if args.out:
        write_csv(Path(args.out) / "acceptance.csv", ("criterion", "title", "passed", "detail"),
                  [(r.number, r.title, r.passed, r.detail) for r in results])
    return 1 if failed else 0


def cmd_trace(args) -> int:
    from .trajectory_admm import solve_trajectory

    scenario = build_scenario(args.scenario, args.seed)
    out = Path(args.out)
    tag = f"trace {args.level} scenario={args.scenario} seed={args.seed}"
    if args.level == "outer":
        result = solve(scenario, args.strategy or "bcd-admm")
        path = write_trace(out / "trace_outer.csv", result.mse_per_iteration, comment=tag)
    else:
        # first trajectory step of the outer loop: eta and theta from the fly-hover start
        q = fly_hover_trajectory(scenario)
        gain2 = channel_gains(q, scenario).gain2
        theta = scenario.avg_powers[:, None] * gain2
        eta, _ = optimal_eta(theta, scenario.noise_power)
        theta = optimal_theta(eta, gain2, scenario)
        res = solve_trajectory(theta, scenario, q, eta, record=True)
        optimum = None
        if args.oracle:
            from .acceptance import oracle_trajectory

            optimum = oracle_trajectory(theta, scenario, q)[1]
        path = write_trace(out / "trace_inner.csv", [h[1] for h in res.history], optimum, tag, start=1)
    print(f"wrote {path}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uav-aircomp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--scenario", default="desk", help="built-in name (desk, reference) or YAML file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=out_default)
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("solve", help="run one strategy (or all) and write CSV artifacts")
    common(p, "results")
    p.add_argument("--strategy", default="bcd-admm", help=f"{' | '.join(STRATEGIES)} | all")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="one summary row per (strategy, parameter value)")
    common(p, "results")
    p.add_argument("--param", required=True, help="noise_dbm, mission_duration, num_sensors or a Scenario field")
    p.add_argument("--values", required=True, help="lo:hi:step or comma list")
    p.add_argument("--strategy", default=None)
    p.add_argument("--strategies", default=None, help="comma list or all (default all)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the acceptance suite")
    common(p, None)
    p.add_argument("--suite", default="acceptance")
    p.add_argument("--criteria", default=None, help="comma list of criterion numbers")
    p.add_argument("--mc-samples", type=int, default=1_000_000)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("trace", help="convergence trace of the inner ADMM or the outer loop")
    common(p, "results")
    p.add_argument("--level", choices=("inner", "outer"), default="inner")
    p.add_argument("--strategy", default=None)
    p.add_argument("--oracle", action="store_true", help="add a relative_error column from the reference solver")
    p.set_defaults(func=cmd_trace)
    return parser


def _glue_values(argv: list[str]) -> list[str]:
    """Let ``--values -90:-60:5`` through argparse, which reads a leading '-' as a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--values":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--values={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    level = os.environ.get("AIRCOMP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(_glue_values(sys.argv[1:] if argv is None else list(argv)))
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleScenarioError as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
