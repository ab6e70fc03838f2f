import math

import numpy as np
import pytest

import milp_solver
import planner_milp
import stl_core
from dynamics import RigidBodyModel
from errors import GeometryError, InfeasibleError, SpecError
from planner_milp import Plan, PlanningTask
from polytope_geom import Polytope

UNIT_MASS = RigidBodyModel(kind="space_linear", mass=1.0, inertia=[1.0, 1.0, 1.0], name="unit")


def _line_task(spec_text, T, dt=1.0, c1=0.0, c2=0.0, **overrides):
    """Unit mass on a line: |u| <= 1, |d| <= 0.25, workspace [-10, 10]."""
    fields = dict(
        spec=stl_core.parse_spec(spec_text, ("x",)),
        model=UNIT_MASS,
        U=Polytope.symmetric_box([1.0]),
        K=np.eye(1),
        d_bar=np.array([0.25]),
        dt=dt,
        N=int(round(T / dt)),
        x0=np.zeros(2),
        workspace_lower=np.array([-10.0]),
        workspace_upper=np.array([10.0]),
        axes=(0,),
        c1=c1,
        c2=c2,
        name="line",
    )
    fields.update(overrides)
    return PlanningTask(**fields)


# --- Robustness degree oracle ---

@pytest.mark.parametrize("T", [4.0, 6.0])
@pytest.mark.parametrize("solver", ["bnb", "highs"])
def test_alpha_matches_closed_form_on_a_line(T, solver):
    plan = planner_milp.plan(_line_task(f"F[{T},{T}] x >= 1", T), solver=solver, gap=1e-9)
    assert plan.alpha == pytest.approx(4.0 * (1.0 - 2.0 / T ** 2), abs=1e-3)
    assert plan.configs[-1, 0] >= 1.0 - 1e-6


def test_alpha_grows_with_authority_and_shrinks_with_disturbance():
    def alpha(bound, d):
        task = _line_task("F[4,4] x >= 1", 4.0, U=Polytope.symmetric_box([bound]), d_bar=np.array([d]))
        return planner_milp.plan(task, gap=1e-9).alpha

    by_authority = [alpha(bound, 0.25) for bound in (1.0, 1.5, 2.0)]
    by_disturbance = [alpha(1.0, d) for d in (0.2, 0.25, 0.3)]
    assert all(b >= a - 1e-6 for a, b in zip(by_authority, by_authority[1:]))
    assert all(b <= a + 1e-6 for a, b in zip(by_disturbance, by_disturbance[1:]))
    assert by_authority[-1] > by_authority[0]


def test_spatial_robustness_is_pushed_to_its_cap():
    plan = planner_milp.plan(_line_task("F[4,4] x >= 1", 4.0, c1=1e3, rho_cap=0.2), gap=1e-9)
    assert plan.rho == pytest.approx(0.2, abs=1e-6)
    assert plan.configs[-1, 0] >= 1.2 - 1e-6
    assert stl_core.robustness(_line_task("F[4,4] x >= 1", 4.0).spec, plan.signal()) >= plan.rho - 1e-6


def test_disjunction_picks_a_reachable_branch():
    task = _line_task("F[3,4] (x >= 1 | x <= -5)", 4.0, c1=1.0)
    plan = planner_milp.plan(task, gap=1e-9)
    signal = plan.signal()
    assert stl_core.robustness(task.spec, signal) >= 0.0
    assert np.all(plan.configs[3:, 0] > -5.0)
    assert plan.solver["backend"] == "bnb"


def test_heavy_fuel_weight_front_loads_the_push():
    plan = planner_milp.plan(_line_task("F[4,4] x >= 0.5", 4.0, c2=100.0), gap=1e-9)
    assert plan.fuel == pytest.approx(1.0 / 7.0, abs=1e-6)
    assert plan.alpha == pytest.approx(24.0 / 7.0, abs=1e-6)
    np.testing.assert_allclose(plan.inputs[1:, 0], 0.0, atol=1e-9)


def test_true_spec_has_infinite_robustness():
    plan = planner_milp.plan(_line_task("true", 2.0))
    assert math.isinf(plan.rho)
    assert plan.to_dict()["rho"] is None


# --- Failure modes ---

def test_unreachable_goal_is_infeasible():
    with pytest.raises(InfeasibleError):
        planner_milp.plan(_line_task("F[1,1] x >= 9", 1.0))


def test_goal_outside_workspace_is_infeasible():
    with pytest.raises(InfeasibleError):
        planner_milp.plan(_line_task("F[2,2] x >= 20", 2.0))


def test_required_alpha_above_attainable():
    with pytest.raises(InfeasibleError):
        planner_milp.plan(_line_task("F[4,4] x >= 1", 4.0, alpha_min=5.0))


def test_horizon_longer_than_grid():
    with pytest.raises(SpecError):
        planner_milp.plan(_line_task("F[6,6] x >= 1", 4.0))


def test_input_set_must_cancel_disturbance():
    with pytest.raises(GeometryError):
        planner_milp.plan(_line_task("F[4,4] x >= 1", 4.0, d_bar=np.array([2.0])))


def test_terminal_box_is_enforced():
    task = _line_task("F[2,2] x >= 0.5", 4.0, terminal_lower=np.array([0.9]), terminal_upper=np.array([1.1]),
                      rest_at_end=True)
    plan = planner_milp.plan(task, gap=1e-9)
    assert 0.9 - 1e-6 <= plan.configs[-1, 0] <= 1.1 + 1e-6
    assert plan.rates[-1, 0] == pytest.approx(0.0, abs=1e-9)


# --- Plan container ---

def test_plan_serialization_keeps_grid_and_solver():
    plan = planner_milp.plan(_line_task("F[4,4] x >= 1", 4.0), gap=1e-9)
    data = plan.to_dict()
    assert data["solver"]["status"] == milp_solver.OPTIMAL
    restored = Plan.from_dict(data)
    np.testing.assert_array_equal(restored.configs, plan.configs)
    assert restored.dims == ("x",)
    assert restored.duration == pytest.approx(4.0)
    frame = plan.to_frame()
    assert list(frame.columns) == ["t", "x", "d_x", "Fx"]
    assert math.isnan(frame["Fx"].iloc[-1])


def test_lp_export_names_the_decision_variables():
    text = milp_solver.export_lp(planner_milp.encode_task(_line_task("F[4,4] x >= 1", 4.0)))
    assert "alpha" in text and "eta_x_4" in text and "u_Fx_0" in text


# --- Shipped scenario ---

@pytest.mark.slow
def test_planar_scenario_plan(planar_scenario):
    plan = planner_milp.plan(planar_scenario.planning_task(), solver="highs", gap=1e-4, time_budget=600)
    assert plan.alpha >= 1.0
    assert plan.rho == pytest.approx(0.2, abs=1e-6)
    assert stl_core.robustness(planar_scenario.spec, plan.signal()) >= plan.rho - 1e-6
