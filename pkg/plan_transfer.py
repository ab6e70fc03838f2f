"""Re-time a space plan so the underwater platform flies the same poses.

The configuration sequence is pinned, so the wrenches the underwater model
needs are a function of the sample spacing alone. The transfer searches the
smallest spacing whose inverse-dynamics wrenches all fit inside the
underwater input set tightened by the space plan's alpha.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

import polytope_geom
import stl_core
from dynamics import expand_axes, inverse_dynamics, pose_from_config
from errors import InfeasibleError, ValidationError
from planner_milp import Plan

logger = logging.getLogger(__name__)

GRID_POINTS = 50
REL_TOL = 1e-4
FEASIBILITY_TOL = 1e-9
AUDIT_TOL = 1e-6
FLOOR_RATIO = 0.1
CEILING_RATIO = 100.0


@dataclass(frozen=True, eq=False)
class TransferResult:
    dt_star: float
    speedup: float
    plan_uw: Plan
    spec_uw: stl_core.Formula
    violation: float
    profile: tuple = field(default_factory=tuple)
    monotone: bool = True

    def to_dict(self):
        return {
            "dt_star": self.dt_star,
            "speedup": self.speedup,
            "violation": self.violation,
            "monotone": self.monotone,
            "profile": [{"dt": dt, "feasible": ok, "violation": v} for dt, ok, v in self.profile],
        }


def required_wrenches(dt, plan_sp, m_uw):
    """Inverse-dynamics wrenches on the plan's active axes, one row per pose.

    Endpoint wrenches come from one-sided second-order differences; next to
    an input switch they overestimate, which only lengthens dt*.
    """
    poses = np.array([np.concatenate(pose_from_config(expand_axes(c, plan_sp.axes))) for c in plan_sp.configs])
    wrenches = inverse_dynamics(m_uw, poses, dt)
    return wrenches[:, list(plan_sp.axes)]


def feasible_at(dt, plan_sp, m_uw, U_uw, K, d_bar, alpha):
    """(feasible, worst signed violation) of the re-timed plan at spacing dt."""
    tightened = polytope_geom.tighten(U_uw, K, d_bar, alpha)
    wrenches = required_wrenches(dt, plan_sp, m_uw)
    violation = max(tightened.violation(w) for w in wrenches)
    return violation <= FEASIBILITY_TOL, float(violation)


def _round_up(dt, quantum):
    return math.ceil(dt / quantum - 1e-9) * quantum


def _quantize(dt, quantum, rel_tol, feasible_at):
    """Round dt up to a multiple of quantum; the multiple just below is kept when
    it lies within the bisection tolerance and is feasible."""
    up = _round_up(dt, quantum)
    below = up - quantum
    if below > 0.0 and below >= dt * (1.0 - rel_tol) and feasible_at(below)[0]:
        return below
    return up


def transfer(plan_sp, spec_sp, m_uw, U_uw, K, d_bar, alpha, *, floor_ratio=FLOOR_RATIO,
             ceiling_ratio=CEILING_RATIO, grid_points=GRID_POINTS, rel_tol=REL_TOL, dt_quantum=None):
    """Smallest feasible spacing dt* and the re-timed plan / time-scaled spec.

    When the space spacing already works the search runs downward to
    floor_ratio * dt_sp, otherwise upward to ceiling_ratio * dt_sp.

    :raises InfeasibleError: no spacing in the search range is feasible
    """
    dt_sp = plan_sp.dt

    def feasible_at_dt(dt):
        return feasible_at(dt, plan_sp, m_uw, U_uw, K, d_bar, alpha)

    ok_sp, violation_sp = feasible_at_dt(dt_sp)
    if ok_sp:
        grid = np.geomspace(dt_sp * floor_ratio, dt_sp, grid_points)
    else:
        grid = np.geomspace(dt_sp, dt_sp * ceiling_ratio, grid_points)
    logger.info("[Transfer] dt_sp=%.6g %s (violation %.3g); scanning [%.6g, %.6g]",
                dt_sp, "feasible" if ok_sp else "infeasible", violation_sp, grid[0], grid[-1])

    profile = tuple((float(dt), *feasible_at_dt(float(dt))) for dt in grid)
    flags = [ok for _, ok, _ in profile]
    if not any(flags):
        raise InfeasibleError(
            f"no feasible dt in [{grid[0]:.6g}, {grid[-1]:.6g}] at alpha = {alpha:.6g}",
            stage="transfer",
            details={"profile": [list(row) for row in profile]},
        )

    first = flags.index(True)
    monotone = all(flags[first:])
    if not monotone:
        logger.warning("[Transfer] feasibility is not monotone in dt; taking the smallest feasible grid point %.6g",
                       grid[first])
        dt_star = float(grid[first])
    elif first == 0:
        dt_star = float(grid[0])
    else:
        lo, hi = float(grid[first - 1]), float(grid[first])
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if feasible_at_dt(mid)[0]:
                hi = mid
            else:
                lo = mid
        dt_star = hi

    if dt_quantum:
        dt_star = _quantize(dt_star, dt_quantum, rel_tol, feasible_at_dt)
    ok, violation = feasible_at_dt(dt_star)
    if not ok:
        raise InfeasibleError(f"transfer spacing {dt_star:.6g} is infeasible (violation {violation:.3g})",
                              stage="transfer")

    wrenches = required_wrenches(dt_star, plan_sp, m_uw)
    plan_uw = Plan(
        dt=dt_star,
        configs=plan_sp.configs.copy(),
        rates=plan_sp.rates * (dt_sp / dt_star),
        inputs=wrenches,
        alpha=plan_sp.alpha,
        rho=plan_sp.rho,
        fuel=float(np.abs(wrenches).sum()),
        axes=plan_sp.axes,
        solver={"backend": "transfer", "status": "optimal" if monotone else "grid"},
    )
    spec_uw = stl_core.time_scale(spec_sp, dt_star / dt_sp)
    result = TransferResult(
        dt_star=dt_star,
        speedup=dt_sp / dt_star,
        plan_uw=plan_uw,
        spec_uw=spec_uw,
        violation=violation,
        profile=profile,
        monotone=monotone,
    )
    logger.info("[Transfer] dt*=%.6g speedup=%.4g duration %.6g -> %.6g s",
                dt_star, result.speedup, plan_sp.duration, plan_uw.duration)
    return result


def audit_transfer(result, plan_sp, spec_sp, U_uw, K, d_bar, alpha, tol=AUDIT_TOL):
    """Re-check the transfer invariants from scratch.

    :raises ValidationError: a re-timed wrench leaves the tightened set, the
        poses moved, or the two robustness values disagree
    """
    tightened = polytope_geom.tighten(U_uw, K, d_bar, alpha)
    plan_uw = result.plan_uw
    input_violation = max(tightened.violation(w) for w in plan_uw.inputs)
    config_deviation = float(np.max(np.abs(plan_uw.configs - plan_sp.configs)))
    rho_sp = stl_core.robustness(spec_sp, plan_sp.signal(), 0.0)
    rho_uw = stl_core.robustness(result.spec_uw, plan_uw.signal(), 0.0)
    report = {
        "input_violation": float(input_violation),
        "config_deviation": config_deviation,
        "rho_sp": rho_sp,
        "rho_uw": rho_uw,
    }
    problems = []
    if input_violation > tol:
        problems.append(f"re-timed wrench outside the tightened set by {input_violation:.3g}")
    if config_deviation != 0.0:
        problems.append(f"poses moved by {config_deviation:.3g}")
    if abs(rho_sp - rho_uw) > 1e-9:
        problems.append(f"robustness {rho_uw:.9g} differs from {rho_sp:.9g}")
    if problems:
        raise ValidationError("transfer audit failed: " + "; ".join(problems), stage="transfer", details=report)
    return report
