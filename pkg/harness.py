"""End-to-end mission pipeline: plan, transfer, fly both platforms, validate.

A run is deterministic given the scenario and the seed. Measurement noise
and noise-profile injections draw from separate numpy generators seeded
from [seed, stream], and the report carries no wall-clock values.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import linprog
from scipy.signal import lfilter

import config
import plan_transfer
import planner_milp
import report_generator
import stl_core
from control_mpc import UNDERWATER_EQUIVALENT, MpcConfig, MpcController, Reference
from dynamics import CONFIG_DIMS, config_from_state, expand_axes, feedback_equivalence_input, rk4_step, wrap_angle
from errors import MissionError, ScenarioError, SpecError, ValidationError
from estimation_ekf import DisturbanceEkf
from planner_milp import INPUT_NAMES, Plan
from polytope_geom import Polytope
from scenario_loader import load_schema

logger = logging.getLogger(__name__)

SPACE = "space"
UNDERWATER = "underwater"
PLATFORMS = (SPACE, UNDERWATER)

VALIDATED = "validated"
NOT_TRANSFERABLE = "not transferable"
NOT_VALIDATED = "not validated"

CONTAINMENT_TOL = 1e-6
SATURATION_TOL = 1e-6
DEFAULT_CONTROLLER_DT = 0.1
DEFAULT_CUTOFF = 0.5
MEASUREMENT_STREAM = 1
INJECTION_STREAM = 2
REPORT_SCHEMA = "report.schema.json"

STATE_COLUMNS = ("px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz")
WRENCH_BLOCKS = ("cmd", "app", "inj", "dhat", "dhat_design")
DIAGNOSTIC_COLUMNS = ("mpc_cost", "mpc_slack", "mpc_kkt", "mpc_scale", "mpc_saturated", "mpc_failed",
                      "mpc_qp_iterations")


# --- Trace ---

@dataclass(frozen=True, eq=False)
class Trace:
    """Per-tick record of one closed-loop run.

    Wrench rows are 6-dim [Fx Fy Fz tau_x tau_y tau_z]. `commands` is the
    design-model wrench chosen by the MPC and `applied` what the plant
    received. `d_hat` is the estimate checked for containment, `d_hat_design`
    the one fed to the MPC; they coincide on the space platform. The last
    row records the final state and carries no command.

    CSV column order: t, STATE_COLUMNS, x y z roll pitch yaw, then
    cmd_*, app_*, inj_*, dhat_*, dhat_design_* over INPUT_NAMES, then
    DIAGNOSTIC_COLUMNS.
    """

    platform: str
    dt: float
    states: np.ndarray
    configs: np.ndarray
    commands: np.ndarray
    applied: np.ndarray
    injected: np.ndarray
    d_hat: np.ndarray
    d_hat_design: np.ndarray
    diagnostics: dict
    axes: tuple
    feedback_equivalence: bool = True

    def __len__(self):
        return self.states.shape[0]

    @property
    def times(self):
        return self.dt * np.arange(len(self))

    def wrench_blocks(self):
        return dict(zip(WRENCH_BLOCKS, (self.commands, self.applied, self.injected, self.d_hat, self.d_hat_design)))

    def to_frame(self):
        columns = {"t": self.times}
        for i, name in enumerate(STATE_COLUMNS):
            columns[name] = self.states[:, i]
        for i, dim in enumerate(CONFIG_DIMS):
            columns[dim] = self.configs[:, i]
        for prefix, values in self.wrench_blocks().items():
            for i, name in enumerate(INPUT_NAMES):
                columns[f"{prefix}_{name}"] = values[:, i]
        for name in DIAGNOSTIC_COLUMNS:
            columns[name] = self.diagnostics[name]
        return pd.DataFrame(columns)

    @classmethod
    def from_frame(cls, frame, platform, axes, feedback_equivalence=True):
        missing = [c for c in ("t", *STATE_COLUMNS, *CONFIG_DIMS) if c not in frame.columns]
        if missing:
            raise ScenarioError(f"trace is missing columns {missing}", path=platform)
        t = frame["t"].to_numpy(dtype=float)
        blocks = {prefix: frame[[f"{prefix}_{n}" for n in INPUT_NAMES]].to_numpy(dtype=float)
                  for prefix in WRENCH_BLOCKS}
        return cls(
            platform=platform,
            dt=float(t[1] - t[0]) if t.size > 1 else DEFAULT_CONTROLLER_DT,
            states=frame[list(STATE_COLUMNS)].to_numpy(dtype=float),
            configs=frame[list(CONFIG_DIMS)].to_numpy(dtype=float),
            commands=blocks["cmd"],
            applied=blocks["app"],
            injected=blocks["inj"],
            d_hat=blocks["dhat"],
            d_hat_design=blocks["dhat_design"],
            diagnostics={n: frame[n].to_numpy(dtype=float) for n in DIAGNOSTIC_COLUMNS},
            axes=tuple(axes),
            feedback_equivalence=feedback_equivalence,
        )


# --- Disturbance injection ---

def _injection_vector(values, n, where):
    v = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
    if v.size == 1:
        v = np.full(n, v[0])
    if v.size != n:
        raise ScenarioError(f"injection needs {n} values, got {v.size}", path=where)
    return v


def injection_scale(profile, alpha, d_bar):
    """Per-axis multiplier: alpha * d_bar for fraction units, else 1."""
    d_bar = np.asarray(d_bar, dtype=float)
    if (profile or {}).get("units", "absolute") == "fraction":
        return float(alpha) * d_bar
    return np.ones_like(d_bar)


def injection_samples(profile, axes, scale, times, seed=config.DEFAULT_SEED):
    """(T, 6) injected disturbance per tick: inertial force, body torque.

    Profiles: "none"; "constant" (value); "piecewise" (each segment's value
    holds from its start until the next one, zero before the first);
    "noise" (white noise of level `value`, first-order low-pass at `cutoff`
    Hz, clipped to `box`). Values and box are over the active axes and in
    the profile's units.
    """
    profile = profile or {"profile": "none"}
    kind = profile.get("profile", "none")
    n = len(axes)
    times = np.asarray(times, dtype=float)
    scale = np.asarray(scale, dtype=float)
    box = None
    if "box" in profile:
        box = np.abs(_injection_vector(profile["box"], n, "$.injection.box") * scale)

    if kind == "none":
        active = np.zeros((times.size, n))
    elif kind == "constant":
        value = _injection_vector(profile.get("value", 0.0), n, "$.injection.value") * scale
        active = np.tile(value, (times.size, 1))
    elif kind == "piecewise":
        active = np.zeros((times.size, n))
        for i, segment in enumerate(sorted(profile.get("segments", []), key=lambda s: s["start"])):
            value = _injection_vector(segment["value"], n, f"$.injection.segments[{i}].value") * scale
            active[times >= segment["start"] - 1e-9] = value
    elif kind == "noise":
        level = _injection_vector(profile.get("value", 1.0), n, "$.injection.value") * scale
        rng = np.random.default_rng([int(seed), INJECTION_STREAM])
        white = rng.standard_normal((times.size, n)) * level
        dt = float(times[1] - times[0]) if times.size > 1 else DEFAULT_CONTROLLER_DT
        a = math.exp(-2.0 * math.pi * float(profile.get("cutoff", DEFAULT_CUTOFF)) * dt)
        box = np.abs(level) if box is None else box
        active = np.clip(lfilter([1.0 - a], [1.0, -a], white, axis=0), -box, box)
    else:
        raise ScenarioError(f"unknown injection profile '{kind}'", path="$.injection.profile")

    if box is not None and np.any(np.abs(active) > box + 1e-12):
        raise ScenarioError("injected disturbance leaves its declared box", path="$.injection")
    out = np.zeros((times.size, 6))
    out[:, list(axes)] = active
    return out


def scaled_injection(scenario, factor):
    """Constant injection at `factor` * alpha * d_bar on every active axis."""
    return {"profile": "constant", "units": "fraction", "value": [float(factor)] * len(scenario.axes)}


# --- Controller assembly ---

def controller_dt(scenario, platform):
    return float(scenario.mpc.get(platform, {}).get("dt", DEFAULT_CONTROLLER_DT))


def workspace_polytope(scenario):
    """Position half-spaces of the workspace box; None for attitude-only plans."""
    rows, bounds = [], []
    for i, axis in enumerate(scenario.axes):
        if axis < 3:
            e = np.zeros(3)
            e[axis] = 1.0
            rows += [e, -e]
            bounds += [scenario.workspace_upper[i], -scenario.workspace_lower[i]]
    return Polytope(np.array(rows), np.array(bounds)) if rows else None


def build_controller(scenario, platform, reference, feedback_equivalence=True):
    """MPC on the space design model; the underwater platform adds the feedback-equivalence constraint."""
    data = scenario.mpc.get(platform, {})
    workspace = workspace_polytope(scenario)
    m_sp = scenario.space.model
    if platform == SPACE:
        cfg = MpcConfig.from_dict(data, scenario.axes, scenario.space.U, workspace)
        return MpcController(cfg, reference, m_sp)
    if feedback_equivalence:
        cfg = MpcConfig.from_dict(data, scenario.axes, scenario.space.U, workspace,
                                  uw_input_set=scenario.underwater.U, mode=UNDERWATER_EQUIVALENT)
        return MpcController(cfg, reference, m_sp, scenario.underwater.model)
    # Ablation: design-model wrenches go straight to the vehicle, bounded by its own input set.
    cfg = MpcConfig.from_dict(data, scenario.axes, scenario.underwater.U, workspace)
    return MpcController(cfg, reference, m_sp)


def _equivalence_law(u0, scale, m_sp, m_uw):
    mask = m_uw.twist_mask

    def law(x):
        return scale * mask * feedback_equivalence_input(x, u0, m_sp, m_uw)

    return law


# --- Closed loop ---

def simulate_closed_loop(scenario, platform, plan, alpha=None, injection=None, seed=None,
                         feedback_equivalence=True):
    """Fly `plan` on one platform under MPC with disturbance estimation.

    Each tick measures the body velocities with seeded noise, updates the
    estimators, solves the MPC, injects the disturbance and steps the plant
    with RK4. On the underwater platform the feedback-equivalence law is
    re-evaluated at every RK4 stage; with feedback_equivalence=False the
    design-model wrench goes to the vehicle unchanged.

    :param alpha: robustness degree scaling fraction-unit injections (plan.alpha by default)
    :param injection: profile dict overriding the scenario's
    """
    if platform not in PLATFORMS:
        raise ScenarioError(f"unknown platform '{platform}'", path="platform")
    seed = scenario.seed if seed is None else int(seed)
    alpha = plan.alpha if alpha is None else float(alpha)
    injection = scenario.injection if injection is None else injection
    target = scenario.space if platform == SPACE else scenario.underwater
    m_sp, plant = scenario.space.model, target.model
    dt = controller_dt(scenario, platform)

    reference = Reference.from_plan(plan, m_sp, dt)
    controller = build_controller(scenario, platform, reference, feedback_equivalence)
    transformed = platform == UNDERWATER and feedback_equivalence
    axes = list(scenario.axes)
    steps = reference.length - 1
    disturbances = injection_samples(injection, scenario.axes, injection_scale(injection, alpha, target.d_bar),
                                     reference.times, seed)
    rng = np.random.default_rng([seed, MEASUREMENT_STREAM])
    mask = plant.twist_mask
    logger.info("[Harness] %s: %d ticks at dt=%.3g, injection '%s'%s", platform, steps, dt,
                (injection or {}).get("profile", "none"), "" if feedback_equivalence else ", no feedback equivalence")

    T = steps + 1
    states = np.empty((T, 13))
    configs = np.empty((T, 6))
    commands = np.full((T, 6), np.nan)
    applied = np.full((T, 6), np.nan)
    d_hat = np.empty((T, 6))
    d_hat_design = np.empty((T, 6))
    diagnostics = {name: np.full(T, np.nan) for name in DIAGNOSTIC_COLUMNS}

    x = reference.states[0].copy()
    design_ekf = DisturbanceEkf(m_sp, scenario.ekf, velocity=x[7:13])
    plant_ekf = design_ekf if platform == SPACE else DisturbanceEkf(plant, scenario.ekf, velocity=x[7:13])
    last_command = last_applied = np.zeros(6)
    last_q = x[3:7].copy()
    failures = 0
    for k in range(T):
        z = x[7:13] + rng.normal(0.0, scenario.measurement_noise, 6) * mask
        if k:
            design_ekf.step(last_command, last_q, dt, z)
            if plant_ekf is not design_ekf:
                plant_ekf.step(last_applied, last_q, dt, z)
        d_design = design_ekf.estimate().as_vector()
        states[k] = x
        configs[k] = config_from_state(x, reference=reference.configs[k])
        d_hat[k] = plant_ekf.estimate().as_vector()
        d_hat_design[k] = d_design
        if k == steps:
            break

        x_hat = np.concatenate([x[0:7], design_ekf.velocity])
        solution = controller.step(k, x_hat, d_design)
        if solution.failed:
            failures += 1
            u0 = last_command
        else:
            u0 = solution.u0
        if transformed:
            law = _equivalence_law(u0, solution.scale, m_sp, plant)
            wrench = law(x)
            saturated = solution.scaled
        else:
            law = wrench = u0
            saturated = controller.cfg.input_set.violation(u0[axes]) > -SATURATION_TOL

        commands[k], applied[k] = u0, wrench
        diagnostics["mpc_cost"][k] = solution.cost
        diagnostics["mpc_slack"][k] = solution.slack
        diagnostics["mpc_kkt"][k] = solution.kkt_residual
        diagnostics["mpc_scale"][k] = solution.scale
        diagnostics["mpc_saturated"][k] = float(saturated)
        diagnostics["mpc_failed"][k] = float(solution.failed)
        diagnostics["mpc_qp_iterations"][k] = solution.qp_iterations

        last_command, last_applied, last_q = u0, wrench, x[3:7].copy()
        x = rk4_step(plant, x, law, disturbances[k], dt)

    if failures:
        logger.warning("[Harness] %s: %d MPC failures; previous command held", platform, failures)
    return Trace(
        platform=platform,
        dt=dt,
        states=states,
        configs=configs,
        commands=commands,
        applied=applied,
        injected=disturbances,
        d_hat=d_hat,
        d_hat_design=d_hat_design,
        diagnostics=diagnostics,
        axes=tuple(scenario.axes),
        feedback_equivalence=feedback_equivalence,
    )


# --- Validation ---

def plan_configs_at(plan, times):
    """6-dim plan configurations at `times` (cubic Hermite, clipped to the plan)."""
    spline = CubicHermiteSpline(plan.times, plan.configs, plan.rates, axis=0)
    t = np.clip(np.asarray(times, dtype=float), 0.0, plan.duration)
    return np.array([expand_axes(c, plan.axes) for c in spline(t)])


def executed_signal(trace, plan):
    """Executed configurations at the plan's grid times, nearest tick."""
    idx = np.clip(np.rint(plan.times / trace.dt).astype(int), 0, len(trace) - 1)
    return stl_core.Signal(plan.times, trace.configs[idx][:, list(plan.axes)], plan.dims)


def deviation(trace, plan, spec):
    """max over ticks of the inf-norm configuration error on the dimensions `spec` reads.

    Angles count 1 rad as 1 m and are compared modulo 2 pi.
    """
    dims = stl_core.dims_used(spec, plan.dims) or list(plan.dims)
    cols = [CONFIG_DIMS.index(d) for d in dims]
    planned = plan_configs_at(plan, trace.times)[:, cols]
    error = trace.configs[:, cols] - planned
    angular = [j for j, c in enumerate(cols) if c >= 3]
    if angular:
        error[:, angular] = wrap_angle(error[:, angular])
    return float(np.max(np.abs(error)))


def containment(d_hat, axes, bound, tol=CONTAINMENT_TOL):
    """(holds, worst excess, first violation) of |d_hat_i| <= bound_i over every tick."""
    excess = np.abs(np.asarray(d_hat)[:, list(axes)]) - np.asarray(bound, dtype=float)
    margin = float(np.max(excess))
    bad = np.argwhere(excess > tol)
    first = None
    if bad.size:
        k, i = (int(v) for v in bad[0])
        first = {"tick": k, "axis": INPUT_NAMES[axes[i]], "excess": float(excess[k, i])}
    return first is None, margin, first


def verdict(contained, satisfied, within_margin):
    if not contained:
        return NOT_TRANSFERABLE
    return VALIDATED if satisfied and within_margin else NOT_VALIDATED


def validate(trace, plan, spec, alpha, d_bar, rho_star=None):
    """Report fragment for one platform. Always returns; failures show up as verdicts."""
    rho_star = plan.rho if rho_star is None else float(rho_star)
    axes = list(trace.axes)
    try:
        result = stl_core.evaluate(spec, executed_signal(trace, plan))
        rho_executed, satisfied = result.rho, result.satisfied
    except SpecError as e:
        logger.warning("[Harness] %s: executed signal could not be evaluated: %s", trace.platform, e)
        rho_executed, satisfied = None, False
    delta = deviation(trace, plan, spec)
    within = delta <= rho_star
    bound = float(alpha) * np.asarray(d_bar, dtype=float)
    contained, margin, first = containment(trace.d_hat, axes, bound)
    if first is not None:
        first["time"] = first["tick"] * trace.dt
    applied = trace.applied[:-1][:, axes]
    fragment = {
        "platform": trace.platform,
        "feedback_equivalence": trace.feedback_equivalence,
        "ticks": len(trace),
        "controller_dt": trace.dt,
        "plan_dt": plan.dt,
        "duration": plan.duration,
        "alpha": float(alpha),
        "rho_star": rho_star,
        "rho_executed": rho_executed,
        "satisfied": bool(satisfied),
        "delta": delta,
        "delta_within_rho": bool(within),
        "containment": bool(contained),
        "containment_margin": margin,
        "first_violation": first,
        "bounds": bound,
        "max_abs_estimate": np.max(np.abs(trace.d_hat[:, axes]), axis=0),
        "saturation_incidents": int(np.nansum(trace.diagnostics["mpc_saturated"])),
        "qp_failures": int(np.nansum(trace.diagnostics["mpc_failed"])),
        "fuel": float(np.sum(np.abs(applied)) * trace.dt),
        "verdict": verdict(contained, satisfied, within),
    }
    logger.info("[Harness] %s: %s (satisfied=%s, delta=%.4g vs rho*=%.4g, containment margin %.3g)",
                trace.platform, fragment["verdict"], satisfied, delta, rho_star, margin)
    return jsonable(fragment)


# --- Report ---

def jsonable(value):
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def axis_limits(U):
    """(lower, upper) extent of a polytope along each coordinate axis."""
    lower, upper = np.empty(U.dim), np.empty(U.dim)
    for i in range(U.dim):
        c = np.zeros(U.dim)
        c[i] = 1.0
        lo = linprog(c, A_ub=U.H, b_ub=U.b, bounds=[(None, None)] * U.dim, method="highs")
        hi = linprog(-c, A_ub=U.H, b_ub=U.b, bounds=[(None, None)] * U.dim, method="highs")
        lower[i], upper[i] = lo.fun, -hi.fun
    return lower, upper


def overall_verdict(validations):
    verdicts = [v["verdict"] for v in validations.values()]
    if all(v == VALIDATED for v in verdicts):
        return VALIDATED
    if NOT_TRANSFERABLE in verdicts:
        return NOT_TRANSFERABLE
    return NOT_VALIDATED


def build_report(scenario, seed, plans, transfer, audit, validations, injection, feedback_equivalence=True):
    """Assemble the report dict; deterministic for a given scenario and seed."""
    plan_sp, plan_uw = plans[SPACE], plans[UNDERWATER]
    solver = {k: plan_sp.solver.get(k) for k in ("backend", "status", "objective", "bound", "nodes")}
    limits = {}
    for platform, U in ((SPACE, scenario.space.U), (UNDERWATER, scenario.underwater.U)):
        lower, upper = axis_limits(U)
        limits[platform] = {"lower": lower, "upper": upper}
    platforms = {}
    for platform, fragment in validations.items():
        platforms[platform] = dict(fragment, input_limits=limits[platform])
    report = {
        "scenario": scenario.name,
        "seed": seed,
        "dims": list(scenario.dims),
        "spec": scenario.spec_text,
        "verdict": overall_verdict(validations),
        "alpha_star": plan_sp.alpha,
        "alpha": {SPACE: plan_sp.alpha, UNDERWATER: plan_uw.alpha},
        "rho_star": {SPACE: plan_sp.rho, UNDERWATER: plan_uw.rho},
        "planner": {"dt": plan_sp.dt, "steps": plan_sp.n_steps, "duration": plan_sp.duration,
                    "fuel": plan_sp.fuel, "solver": solver},
        "transfer": {
            "dt_space": plan_sp.dt,
            "dt_star": transfer.dt_star,
            "speedup": transfer.speedup,
            "duration_space": plan_sp.duration,
            "duration_underwater": plan_uw.duration,
            "monotone": transfer.monotone,
            "audit": audit,
        },
        "injection": injection or {"profile": "none"},
        "feedback_equivalence": feedback_equivalence,
        "platforms": platforms,
    }
    return jsonable(report)


def check_report(report):
    """:raises ValidationError: the report does not match the shipped schema"""
    validator = Draft202012Validator(load_schema(REPORT_SCHEMA))
    error = best_match(validator.iter_errors(report))
    if error is not None:
        where = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
        raise ValidationError(f"report schema violation at '{where}': {error.message}", stage="report")
    return report


# --- Pipeline ---

@dataclass(frozen=True, eq=False)
class PipelineResult:
    report: dict
    plans: dict
    traces: dict
    transfer: plan_transfer.TransferResult

    @property
    def verdict(self):
        return self.report["verdict"]


def plan_space(scenario, solver=None):
    planner = scenario.planner
    return planner_milp.plan(
        scenario.planning_task(),
        solver=solver or planner.get("solver", "bnb"),
        gap=planner.get("gap", config.MILP_GAP),
        time_budget=planner.get("time_budget", config.MILP_TIME_BUDGET),
        node_limit=planner.get("node_limit"),
    )


def transfer_plan(scenario, plan_sp):
    """Re-time the space plan for the underwater vehicle and audit the result."""
    uw = scenario.underwater
    result = plan_transfer.transfer(plan_sp, scenario.spec, uw.model, uw.U, uw.K, uw.d_bar, plan_sp.alpha,
                                    dt_quantum=controller_dt(scenario, UNDERWATER))
    audit = plan_transfer.audit_transfer(result, plan_sp, scenario.spec, uw.U, uw.K, uw.d_bar, plan_sp.alpha)
    return result, audit


def run_pipeline(scenario, seed=None, injection=None, feedback_equivalence=True, outdir=None, solver=None):
    """Plan, transfer, simulate both closed loops and validate.

    Stage failures propagate as MissionError subclasses after whatever was
    produced so far is written to `outdir`.
    """
    seed = scenario.seed if seed is None else int(seed)
    injection = scenario.injection if injection is None else injection
    plans, traces = {}, {}
    try:
        plans[SPACE] = plan_space(scenario, solver)
        alpha = plans[SPACE].alpha
        result, audit = transfer_plan(scenario, plans[SPACE])
        plans[UNDERWATER] = result.plan_uw
        for platform in PLATFORMS:
            traces[platform] = simulate_closed_loop(scenario, platform, plans[platform], alpha, injection, seed,
                                                    feedback_equivalence=feedback_equivalence)
        validations = {
            SPACE: validate(traces[SPACE], plans[SPACE], scenario.spec, alpha, scenario.space.d_bar),
            UNDERWATER: validate(traces[UNDERWATER], plans[UNDERWATER], result.spec_uw, alpha,
                                 scenario.underwater.d_bar),
        }
        report = build_report(scenario, seed, plans, result, audit, validations, injection, feedback_equivalence)
    except MissionError as e:
        logger.error("[Harness] pipeline stopped in stage '%s': %s", e.stage, e)
        if outdir:
            emit_partial(e, traces, plans, outdir)
        raise
    logger.info("[Harness] %s: %s (alpha*=%.4g, speedup=%.4g)", scenario.name, report["verdict"],
                report["alpha_star"], report["transfer"]["speedup"])
    if outdir:
        emit_outputs(report, traces, plans, outdir)
    return PipelineResult(report=report, plans=plans, traces=traces, transfer=result)


# --- Artifacts ---

def write_json(data, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_plan(plan, outdir, platform):
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, f"plan_{platform}.csv")
    plan.to_frame().to_csv(csv_path, index=False)
    return [csv_path, write_json(plan.to_dict(), os.path.join(outdir, f"plan_{platform}.json"))]


def write_trace(trace, outdir):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"trace_{trace.platform}.csv")
    trace.to_frame().to_csv(path, index=False)
    return path


def panel_frames(trace, plan, fragment):
    """Plot data for one platform: trajectory, inputs with limits, attitude, estimates with bounds."""
    t = trace.times
    planned = plan_configs_at(plan, t)
    axes = list(trace.axes)

    trajectory = pd.DataFrame({"t": t})
    for c in range(3):
        if c in axes:
            trajectory[f"{CONFIG_DIMS[c]}_planned"] = planned[:, c]
            trajectory[f"{CONFIG_DIMS[c]}_executed"] = trace.configs[:, c]

    attitude = pd.DataFrame({"t": t})
    for c in range(3, 6):
        attitude[f"{CONFIG_DIMS[c]}_planned"] = planned[:, c]
        attitude[f"{CONFIG_DIMS[c]}_executed"] = trace.configs[:, c]

    inputs = pd.DataFrame({"t": t})
    limits = fragment["input_limits"]
    for j, axis in enumerate(axes):
        name = INPUT_NAMES[axis]
        inputs[name] = trace.applied[:, axis]
        inputs[f"{name}_min"] = limits["lower"][j]
        inputs[f"{name}_max"] = limits["upper"][j]

    disturbance = pd.DataFrame({"t": t})
    for j, axis in enumerate(axes):
        name = INPUT_NAMES[axis]
        disturbance[f"dhat_{name}"] = trace.d_hat[:, axis]
        disturbance[f"inj_{name}"] = trace.injected[:, axis]
        disturbance[f"{name}_bound_lo"] = -fragment["bounds"][j]
        disturbance[f"{name}_bound_hi"] = fragment["bounds"][j]
    return {"trajectory": trajectory, "inputs": inputs, "attitude": attitude, "disturbance": disturbance}


def emit_outputs(report, traces, plans, outdir):
    """Write traces, plans, figure panels, the schema-checked report JSON and its HTML rendering."""
    check_report(report)
    os.makedirs(outdir, exist_ok=True)
    written = []
    for platform, plan in plans.items():
        written += write_plan(plan, outdir, platform)
    for platform, trace in traces.items():
        written.append(write_trace(trace, outdir))
        for panel, frame in panel_frames(trace, plans[platform], report["platforms"][platform]).items():
            path = os.path.join(outdir, f"panel_{platform}_{panel}.csv")
            frame.to_csv(path, index=False)
            written.append(path)
    written.append(write_json(report, os.path.join(outdir, "report.json")))
    written += report_generator.write_report(report, outdir)
    logger.info("[Harness] wrote %d files to %s", len(written), outdir)
    return written


def emit_partial(error, traces, plans, outdir):
    os.makedirs(outdir, exist_ok=True)
    written = []
    for platform, plan in plans.items():
        written += write_plan(plan, outdir, platform)
    for trace in traces.values():
        written.append(write_trace(trace, outdir))
    written.append(write_json({"stage": error.stage, "error": str(error), "details": error.details},
                              os.path.join(outdir, "error.json")))
    return written


def load_artifacts(directory):
    """Plans and traces written by emit_outputs, keyed by platform."""
    plans, traces = {}, {}
    for platform in PLATFORMS:
        plan_path = os.path.join(directory, f"plan_{platform}.json")
        trace_path = os.path.join(directory, f"trace_{platform}.csv")
        for path in (plan_path, trace_path):
            if not os.path.isfile(path):
                raise ScenarioError("missing artifact", path=path)
        with open(plan_path, "r", encoding="utf-8") as f:
            plans[platform] = Plan.from_dict(json.load(f))
        traces[platform] = Trace.from_frame(pd.read_csv(trace_path), platform, plans[platform].axes)
    return plans, traces


def validate_directory(scenario, directory, seed=None):
    """Re-validate stored plans and traces against the scenario; returns the report."""
    plans, traces = load_artifacts(directory)
    plan_sp, plan_uw = plans[SPACE], plans[UNDERWATER]
    uw = scenario.underwater
    alpha = plan_sp.alpha
    spec_uw = stl_core.time_scale(scenario.spec, plan_uw.dt / plan_sp.dt)
    _, violation = plan_transfer.feasible_at(plan_uw.dt, plan_sp, uw.model, uw.U, uw.K, uw.d_bar, alpha)
    result = plan_transfer.TransferResult(
        dt_star=plan_uw.dt,
        speedup=plan_sp.dt / plan_uw.dt,
        plan_uw=plan_uw,
        spec_uw=spec_uw,
        violation=violation,
    )
    audit = plan_transfer.audit_transfer(result, plan_sp, scenario.spec, uw.U, uw.K, uw.d_bar, alpha)
    validations = {
        SPACE: validate(traces[SPACE], plan_sp, scenario.spec, alpha, scenario.space.d_bar),
        UNDERWATER: validate(traces[UNDERWATER], plan_uw, spec_uw, alpha, uw.d_bar),
    }
    seed = scenario.seed if seed is None else int(seed)
    return check_report(build_report(scenario, seed, plans, result, audit, validations, scenario.injection))
