"""Command-line entry point: ``ogasched <subcommand> ...`` or ``python -m ogasched``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import tomli

from .io import (ConfigError, TraceFormatError, load_config, load_scenario, load_trace, write_metrics_csv,
                 write_summary_json)
from .model import validate_graph
from .policies import POLICY_NAMES
from .projection import Subproblem, project_subproblem
from .regret import RegretBoundInputs, empirical_regret, offline_optimum, regret_upper_bound
from .simulator import SimConfig, compare_policies, run_simulation


def _config(args) -> SimConfig:
    config = load_config(args.config) if args.config else SimConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "T", None) is not None:
        changes["T"] = args.T
    return config.replace(**changes) if changes else config


def _emit(payload: dict, out: str | None, name: str) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    if out:
        path = Path(out) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")


def cmd_simulate(args) -> int:
    config = _config(args)
    scenario = load_scenario(config)
    log = run_simulation(config, scenario.graph, scenario.model, args.policy, scenario.arrivals)
    out = Path(args.out)
    write_metrics_csv(out / "metrics.csv", [log])
    write_summary_json(out / "summary.json", config, {"policies": {log.policy: log.summary()}})
    print(f"{log.policy}: average reward {log.average[-1]:.6g} over {log.T} slots -> {out}")
    return 0


def cmd_compare(args) -> int:
    config = _config(args)
    names = [p.strip() for p in args.policies.split(",") if p.strip()] if args.policies else list(config.policies)
    config = config.replace(policies=tuple(names))
    scenario = load_scenario(config)
    comp = compare_policies(config, scenario.graph, scenario.model, names, scenario.arrivals)
    out = Path(args.out)
    write_metrics_csv(out / "metrics.csv", comp.logs.values())
    write_summary_json(out / "summary.json", config, comp.summary())
    for name, log in comp.logs.items():
        print(f"{name:>12}: average reward {log.average[-1]:.6g}")
    for name, ratio in comp.final_ratios().items():
        shown = "undefined" if ratio is None else f"{ratio:.4f}"
        print(f"{comp.reference}/{name}: {shown}")
    return 0


def cmd_project(args) -> int:
    with open(args.input, "rb") as fh:
        data = tomli.load(fh)
    missing = {"z", "caps", "capacity"} - set(data)
    if missing:
        raise ConfigError(f"projection input lacks {', '.join(sorted(missing))}")
    sub = Subproblem(np.asarray(data["z"], dtype=float), np.asarray(data["caps"], dtype=float), float(data["capacity"]))
    res = project_subproblem(sub)
    _emit({"y": [float(v) for v in res.y], "rho": float(res.rho)}, args.out, "projection.json")
    return 0


def cmd_regret_bound(args) -> int:
    config = _config(args)
    scenario = load_scenario(config)
    bound = regret_upper_bound(RegretBoundInputs.from_problem(scenario.graph, scenario.model, config.T))
    _emit({"H_G": bound.graph_factor, "diameter_bound": bound.diameter, "gradient_bound": bound.gradient,
           "regret_bound": bound.bound, "T": config.T}, args.out, "regret_bound.json")
    return 0


def cmd_offline_opt(args) -> int:
    config = _config(args)
    scenario = load_scenario(config)
    result = offline_optimum(scenario.arrivals, scenario.model, scenario.graph, budget=args.budget)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = scenario.graph
    with open(out / "allocation.csv", "w") as fh:
        fh.write("port,instance," + ",".join(graph.catalog.names) + "\n")
        for (l, r), row in zip(graph.channels, result.y):
            fh.write(f"{l},{r}," + ",".join(repr(float(v)) for v in row) + "\n")
    payload = {"Q_star": result.Q, "iterations": result.iterations, "converged": result.converged}
    if args.policy:
        log = run_simulation(config, graph, scenario.model, args.policy, scenario.arrivals)
        payload["policy"] = args.policy
        payload["regret"] = empirical_regret(scenario.arrivals, log.reward, result.Q)
    write_summary_json(out / "summary.json", config, payload)
    print(json.dumps(payload, indent=2))
    return 0


def cmd_validate(args) -> int:
    problems: list[str] = []
    report = {}
    if args.trace:
        bundle = load_trace(args.trace)
        problems += validate_graph(bundle.to_graph())
        report = {"dropped": bundle.report.dropped, "merged": bundle.report.merged, "slots": bundle.n_slots}
    else:
        config = _config(args)
        scenario = load_scenario(config)
        problems += validate_graph(scenario.base_graph)
    _emit({"valid": not problems, "problems": problems, **report}, args.out, "validation.json")
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ogasched", description="Online multi-resource scheduling by gradient ascent.")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p, out_default=None):
        p.add_argument("--config", help="TOML run config; omitted keys take their defaults")
        p.add_argument("--seed", type=int)
        p.add_argument("--T", type=int, help="override the horizon")
        if out_default is None:
            p.add_argument("--out", help="directory for a JSON copy of the output")
        else:
            p.add_argument("--out", default=out_default, help="output directory (default: %(default)s)")

    p = sub.add_parser("simulate", help="run one policy")
    scenario_args(p, "runs")
    p.add_argument("--policy", default="oga", choices=[*POLICY_NAMES, "idle"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run several policies on one arrival trajectory")
    scenario_args(p, "runs")
    p.add_argument("--policies", help="comma-separated list; the first is the reference")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("project", help="solve one projection subproblem")
    p.add_argument("--input", required=True, help="TOML file with z, caps and capacity")
    p.add_argument("--out")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("regret-bound", help="print the analytic regret bound of a scenario")
    scenario_args(p)
    p.set_defaults(func=cmd_regret_bound)

    p = sub.add_parser("offline-opt", help="best fixed allocation in hindsight")
    scenario_args(p, "runs")
    p.add_argument("--budget", type=int, default=50_000)
    p.add_argument("--policy", choices=[*POLICY_NAMES, "idle"], help="also report this policy's regret")
    p.set_defaults(func=cmd_offline_opt)

    p = sub.add_parser("validate", help="check a scenario config or a trace directory")
    scenario_args(p)
    p.add_argument("--trace", help="trace directory to check instead of a config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"ogasched {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
