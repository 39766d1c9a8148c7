"""Command-line front end.

Subcommands: compose, select, enforce, simulate, experiment. Every command
writes data files into ``--out-dir`` and prints a short JSON status line.
Failures print an error object on stderr and exit nonzero; ``select`` uses
exit code 2 when no candidate is feasible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from swarmcompose import __version__
from swarmcompose.composition import (
    CompositionPlan,
    CostWeights,
    InvalidPlan,
    Strategy,
    TooFewDrones,
    check_plan,
    compose,
    compose_clustered,
    compose_parallel,
)
from swarmcompose.des import SimConfig, simulate
from swarmcompose.enforcement import enforce
from swarmcompose.experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from swarmcompose.queueing import PlanEvaluator, QueueConfig, delay_table_csv
from swarmcompose.scenario import Scenario, ScenarioError, load_scenario
from swarmcompose.selection import enumerate_candidates, evaluation_table_csv, select_composition

EXIT_ERROR = 1
EXIT_NO_FEASIBLE = 2


class CommandError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _add_common(p: argparse.ArgumentParser, scenario_required: bool = True):
    p.add_argument("--scenario", required=scenario_required, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("paper", "standard"), default=None)
    p.add_argument("--out-dir", default=".", help="directory for output files")


def _add_sla(p: argparse.ArgumentParser):
    p.add_argument("--sla-latency", type=float, default=None, help="latency bound in seconds")
    p.add_argument("--sla-metric", choices=("avg", "max"), default=None)
    p.add_argument("--rho-max", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmcompose", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compose", help="build one strategy's plan and its delay table")
    _add_common(p)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--k", type=int, default=None, help="cluster or chain count")

    p = sub.add_parser("select", help="evaluate all candidates and pick the SLA-optimal one")
    _add_common(p)
    _add_sla(p)
    p.add_argument("--alpha-grid", action="store_true", help="also try alpha in {0, .25, .5, .75, 1}")

    p = sub.add_parser("enforce", help="select, then repair until compliant or exhausted")
    _add_common(p)
    _add_sla(p)
    p.add_argument("--max-cycles", type=int, default=20)

    p = sub.add_parser("simulate", help="run the discrete-event simulator on a plan")
    _add_common(p)
    p.add_argument("--plan", required=True, help="plan JSON written by compose")
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--warmup", type=float, default=10.0)
    p.add_argument("--service", choices=("deterministic", "exponential"), default="deterministic")

    p = sub.add_parser("experiment", help="run one of the Monte Carlo experiments")
    _add_common(p, scenario_required=False)
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--requests", type=int, default=100, help="requests per bin")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--rho-max", type=float, default=None)
    p.add_argument("--sla-metric", choices=("avg", "max"), default=None)
    p.add_argument("--bins", default=None, help="comma-separated bin values")
    p.add_argument("--scale", default=None, help="scale for exp1/exp2/exp3")
    p.add_argument("--large", default=None, metavar="ENTRY,GATEWAYS",
                   help="replace the large scale, e.g. 50,8")
    return parser


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args) -> Scenario:
    try:
        return load_scenario(args.scenario)
    except ScenarioError as exc:
        raise CommandError("scenario", str(exc)) from exc


def _queue(scn: Scenario, args) -> QueueConfig:
    return QueueConfig(mode=scn.setting("mode", args.mode))


def cmd_compose(args) -> dict:
    scn = _scenario(args)
    alpha = float(scn.setting("alpha", args.alpha))
    seed = int(scn.setting("seed", args.seed))
    try:
        if args.k is not None and args.strategy != "direct":
            fn = compose_clustered if args.strategy == "clustered" else compose_parallel
            kwargs = {"seed": seed} if args.strategy == "clustered" else {}
            plan = fn(scn.topology, scn.allocation, CostWeights(), alpha=alpha, k=args.k, **kwargs)
        else:
            plan = compose(args.strategy, scn.topology, scn.allocation, CostWeights(), alpha=alpha, seed=seed)
    except (TooFewDrones, InvalidPlan, ValueError) as exc:
        raise CommandError(type(exc).__name__, str(exc)) from exc
    ev = PlanEvaluator(scn.topology, scn.allocation, _queue(scn, args))(plan)
    out = _out(args)
    (out / "plan.json").write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True))
    (out / "delays.csv").write_text(delay_table_csv(ev.delays))
    return {"status": "ok", "strategy": plan.strategy.value, "feasible": ev.feasible,
            "L_avg": ev.latency.L_avg, "L_max": ev.latency.L_max, "max_rho": ev.max_rho,
            "files": ["plan.json", "delays.csv"]}


def cmd_select(args) -> dict:
    scn = _scenario(args)
    sla = scn.sla(args.sla_latency, args.sla_metric, args.rho_max)
    weights = CostWeights(alpha=float(scn.setting("alpha", args.alpha)))
    grid = (0.0, 0.25, 0.5, 0.75, 1.0) if args.alpha_grid else None
    cands = enumerate_candidates(scn.topology, scn.allocation, weights, grid,
                                 seed=int(scn.setting("seed", args.seed)))
    result = select_composition(cands, sla, scn.topology, scn.allocation, _queue(scn, args))
    out = _out(args)
    (out / "evaluations.csv").write_text(evaluation_table_csv(result.table))
    files = ["evaluations.csv"]
    if result.winner is None:
        raise CommandError("NoFeasible", "no candidate is stable and within the latency bound",
                           EXIT_NO_FEASIBLE)
    (out / "plan.json").write_text(json.dumps(result.winner.plan.to_dict(), indent=2, sort_keys=True))
    files.append("plan.json")
    w = result.winner
    return {"status": "ok", "strategy": w.strategy.value, "alpha": w.alpha,
            "L_sla": w.latency_sla, "max_rho": w.max_rho, "files": files}


def cmd_enforce(args) -> dict:
    scn = _scenario(args)
    sla = scn.sla(args.sla_latency, args.sla_metric, args.rho_max)
    weights = CostWeights(alpha=float(scn.setting("alpha", args.alpha)))
    queue = _queue(scn, args)
    seed = int(scn.setting("seed", args.seed))
    evaluator = PlanEvaluator(scn.topology, scn.allocation, queue)
    cands = enumerate_candidates(scn.topology, scn.allocation, weights, seed=seed)
    sel = select_composition(cands, sla, scn.topology, scn.allocation, queue, evaluator)
    out = _out(args)
    if sel.winner is not None:
        plan, ev = sel.winner.plan, sel.winner.evaluation
        report = {"compliant": True, "cycles": 0, "edits": [], "trace": [],
                  "final_plan": plan.to_dict(), "final_L_avg": ev.latency.L_avg,
                  "final_L_max": ev.latency.L_max, "final_max_rho": ev.max_rho,
                  "downgrade_suggestion": None, "scaleout_suggestion": None}
    else:
        outcome = enforce(scn.topology, scn.allocation, sla, sel, weights, queue,
                          args.max_cycles, evaluator=evaluator)
        report = outcome.to_dict()
    (out / "enforcement.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return {"status": "ok", "compliant": report["compliant"], "cycles": report["cycles"],
            "edits": report["edits"], "files": ["enforcement.json"]}


def cmd_simulate(args) -> dict:
    scn = _scenario(args)
    try:
        plan = CompositionPlan.from_dict(json.loads(Path(args.plan).read_text()))
        check_plan(plan, scn.topology)
    except OSError as exc:
        raise CommandError("plan", f"cannot read {args.plan}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, InvalidPlan) as exc:
        raise CommandError("plan", f"bad plan file: {exc}") from exc
    try:
        cfg = SimConfig(args.duration, args.warmup, int(scn.setting("seed", args.seed)), args.service)
    except ValueError as exc:
        raise CommandError("config", str(exc)) from exc
    queue = QueueConfig(mode=scn.setting("mode", args.mode), distribution=args.service)
    res = simulate(plan, scn.topology, scn.allocation, cfg, queue)
    out = _out(args)
    (out / "simulation.json").write_text(res.to_json())
    (out / "simulation_nodes.csv").write_text(res.node_csv())
    return {"status": "ok", "L_avg": res.L_avg, "L_max": res.L_max,
            "completed": dict(res.completed), "files": ["simulation.json", "simulation_nodes.csv"]}


def cmd_experiment(args) -> dict:
    kwargs = {"requests_per_bin": args.requests, "workers": args.workers}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.mode is not None:
        kwargs["mode"] = args.mode
    if args.rho_max is not None:
        kwargs["rho_max"] = args.rho_max
    if args.sla_metric is not None:
        kwargs["sla_metric"] = args.sla_metric
    if args.scale:
        kwargs["exp1_scale" if args.name == "exp1" else "load_scale"] = args.scale
    try:
        if args.bins:
            kwargs["bins"] = tuple(float(b) if args.name == "exp1" else int(b) for b in args.bins.split(","))
        if args.large:
            entry, gws = (int(v) for v in args.large.split(","))
            kwargs["large_override"] = (entry, gws)
        result = run_experiment(args.name, ExperimentConfig(**kwargs))
    except ValueError as exc:
        raise CommandError("experiment", str(exc)) from exc
    paths = result.write(args.out_dir)
    return {"status": "ok", "experiment": args.name, "checks": result.checks,
            "files": [p.name for p in paths]}


COMMANDS = {"compose": cmd_compose, "select": cmd_select, "enforce": cmd_enforce,
            "simulate": cmd_simulate, "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        status = COMMANDS[args.command](args)
    except CommandError as exc:
        print(json.dumps({"status": "error", "error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.code
    print(json.dumps(status, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
