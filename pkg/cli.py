"""Command line: plan, transfer, simulate, validate, pipeline.

Exit codes: 0 validated (or stage finished), 2 not validated, 3 infeasible,
4 input error, 5 internal failure (solver, dynamics or audit).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import config
import harness
import milp_solver
import planner_milp
import stl_core
from errors import DynamicsError, InfeasibleError, MissionError, SolverError, ValidationError
from planner_milp import Plan
from scenario_loader import load_scenario

logger = logging.getLogger(__name__)

EXIT_VALIDATED = 0
EXIT_NOT_VALIDATED = 2
EXIT_INFEASIBLE = 3
EXIT_INPUT_ERROR = 4
EXIT_INTERNAL_ERROR = 5


def exit_code_for(error):
    if isinstance(error, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(error, (SolverError, ValidationError, DynamicsError)):
        return EXIT_INTERNAL_ERROR
    return EXIT_INPUT_ERROR


def _read_plan(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return Plan.from_dict(json.load(f))
    except (OSError, ValueError, KeyError) as e:
        raise MissionError(f"cannot read plan file {path}: {e}", stage="cli") from e


def _injection(scenario, args):
    if getattr(args, "injection_scale", None) is None:
        return None
    return harness.scaled_injection(scenario, args.injection_scale)


# --- Commands ---

def cmd_plan(args):
    scenario = load_scenario(args.scenario)
    task = scenario.planning_task()
    if args.export_lp:
        with open(args.export_lp, "w", encoding="utf-8") as f:
            f.write(milp_solver.export_lp(planner_milp.encode_task(task)))
        print(f"✅ LP written to {args.export_lp}")
    plan = harness.plan_space(scenario, args.solver)
    harness.write_plan(plan, args.out, harness.SPACE)
    print(f"✅ alpha* = {plan.alpha:.6g}, rho* = {plan.rho:.6g}, fuel = {plan.fuel:.6g} -> {args.out}")
    return EXIT_VALIDATED


def cmd_transfer(args):
    scenario = load_scenario(args.scenario)
    plan_sp = _read_plan(args.plan)
    result, audit = harness.transfer_plan(scenario, plan_sp)
    harness.write_plan(result.plan_uw, args.out, harness.UNDERWATER)
    print(f"✅ dt* = {result.dt_star:.6g} s (speedup {result.speedup:.4g}), "
          f"rho_uw = {audit['rho_uw']:.6g} -> {args.out}")
    return EXIT_VALIDATED


def cmd_simulate(args):
    scenario = load_scenario(args.scenario)
    plan = _read_plan(args.plan)
    trace = harness.simulate_closed_loop(
        scenario, args.platform, plan, injection=_injection(scenario, args), seed=args.seed,
        feedback_equivalence=not args.no_feedback_equivalence,
    )
    harness.write_trace(trace, args.out)
    platform = scenario.space if args.platform == harness.SPACE else scenario.underwater
    spec = stl_core.time_scale(scenario.spec, plan.dt / scenario.dt)
    fragment = harness.validate(trace, plan, spec, plan.alpha, platform.d_bar)
    mark = "✅" if fragment["verdict"] == harness.VALIDATED else "❌"
    print(f"{mark} {args.platform}: {fragment['verdict']} (delta = {fragment['delta']:.4g}, "
          f"containment {'held' if fragment['containment'] else 'failed'}) -> {args.out}")
    return EXIT_VALIDATED if fragment["verdict"] == harness.VALIDATED else EXIT_NOT_VALIDATED


def cmd_validate(args):
    scenario = load_scenario(args.scenario)
    report = harness.validate_directory(scenario, args.traces, seed=args.seed)
    harness.write_json(report, os.path.join(args.traces, "report.json"))
    return _finish(report)


def cmd_pipeline(args):
    scenario = load_scenario(args.scenario)
    result = harness.run_pipeline(
        scenario, seed=args.seed, injection=_injection(scenario, args),
        feedback_equivalence=not args.no_feedback_equivalence, outdir=args.out, solver=args.solver,
    )
    return _finish(result.report)


def _finish(report):
    transfer = report["transfer"]
    mark = "✅" if report["verdict"] == harness.VALIDATED else "❌"
    print(f"{mark} {report['scenario']}: {report['verdict']} "
          f"(alpha* = {report['alpha_star']:.4g}, speedup = {transfer['speedup']:.4g})")
    for name, fragment in report["platforms"].items():
        print(f"   {name}: {fragment['verdict']}, delta = {fragment['delta']:.4g}, "
              f"satisfied = {fragment['satisfied']}, containment = {fragment['containment']}")
    return EXIT_VALIDATED if report["verdict"] == harness.VALIDATED else EXIT_NOT_VALIDATED


# --- Parser ---

def build_parser():
    parser = argparse.ArgumentParser(prog="mission", description="STL mission planning and plan transfer.")
    parser.add_argument("--log-level", default=config.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="solve the space-side planning MILP")
    p.add_argument("scenario")
    p.add_argument("--out", default=config.OUTPUT_DIR)
    p.add_argument("--export-lp", metavar="PATH")
    p.add_argument("--solver", choices=("bnb", "highs"))
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("transfer", help="re-time a space plan for the underwater platform")
    p.add_argument("scenario")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default=config.OUTPUT_DIR)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("simulate", help="fly a plan in closed loop on one platform")
    p.add_argument("scenario")
    p.add_argument("--plan", required=True)
    p.add_argument("--platform", choices=harness.PLATFORMS, required=True)
    p.add_argument("--no-feedback-equivalence", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--injection-scale", type=float, help="constant injection as a fraction of alpha* D")
    p.add_argument("--out", default=config.OUTPUT_DIR)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="validate stored plans and traces")
    p.add_argument("scenario")
    p.add_argument("--traces", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("pipeline", help="plan, transfer, simulate and validate")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=config.OUTPUT_DIR)
    p.add_argument("--solver", choices=("bnb", "highs"))
    p.add_argument("--injection-scale", type=float, help="constant injection as a fraction of alpha* D")
    p.add_argument("--no-feedback-equivalence", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT_ERROR if e.code else EXIT_VALIDATED
    config.configure_logging(args.log_level.upper())
    try:
        return args.func(args)
    except MissionError as e:
        print(f"❌ {e}", file=sys.stderr)
        return exit_code_for(e)
    except OSError as e:
        print(f"❌ [io] {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
