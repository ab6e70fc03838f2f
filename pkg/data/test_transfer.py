import numpy as np
import pytest

import plan_transfer
import stl_core
from dynamics import RigidBodyModel
from errors import InfeasibleError
from planner_milp import Plan
from polytope_geom import Polytope

T = 4.0
DT_SP = 1.0
ALPHA = 4.0 * (1.0 - 2.0 / T ** 2)
UNIT_MASS = RigidBodyModel(kind="space_linear", mass=1.0, inertia=[1.0, 1.0, 1.0])
SPEC = stl_core.parse_spec(f"F[{T},{T}] x >= 1", ("x",))


def _bang_plan():
    """Constant push on the tightened limit for T seconds from rest."""
    a = 1.0 - 0.25 * ALPHA
    t = DT_SP * np.arange(int(T / DT_SP) + 1)
    return Plan(
        dt=DT_SP,
        configs=0.5 * a * t ** 2,
        rates=a * t,
        inputs=np.full(int(T / DT_SP), a),
        alpha=ALPHA,
        rho=0.0,
        fuel=a * T,
        axes=(0,),
    )


def _transfer(authority, **kwargs):
    U = Polytope.symmetric_box([authority])
    return plan_transfer.transfer(_bang_plan(), SPEC, UNIT_MASS, U, np.eye(1), [0.25 * authority], ALPHA, **kwargs)


def test_four_times_the_authority_halves_the_spacing():
    result = _transfer(4.0)
    assert result.dt_star == pytest.approx(DT_SP / 2.0, abs=1e-3)
    assert result.speedup == pytest.approx(2.0, rel=1e-3)
    assert result.monotone


def test_equal_models_keep_the_spacing():
    result = _transfer(1.0)
    assert result.speedup == pytest.approx(1.0, abs=1e-3)


def test_weaker_platform_slows_down():
    result = _transfer(0.25)
    assert result.dt_star == pytest.approx(2.0 * DT_SP, rel=1e-3)
    assert result.plan_uw.duration == pytest.approx(2.0 * T, rel=1e-3)


def test_retimed_plan_keeps_poses_and_robustness():
    result = _transfer(4.0)
    plan_sp = _bang_plan()
    np.testing.assert_array_equal(result.plan_uw.configs, plan_sp.configs)
    np.testing.assert_allclose(result.plan_uw.rates, plan_sp.rates * result.speedup)
    assert result.spec_uw.interval[0] == pytest.approx(T / result.speedup)
    audit = plan_transfer.audit_transfer(result, plan_sp, SPEC, Polytope.symmetric_box([4.0]), np.eye(1), [1.0], ALPHA)
    assert audit["config_deviation"] == 0.0
    assert audit["rho_uw"] == pytest.approx(audit["rho_sp"], abs=1e-12)
    assert audit["input_violation"] <= 1e-6


def test_spacing_rounds_up_to_the_controller_step():
    result = _transfer(4.0, dt_quantum=0.1)
    assert result.dt_star == pytest.approx(0.5)
    result = _transfer(3.0, dt_quantum=0.1)
    assert result.dt_star == pytest.approx(0.6)


def test_feasibility_profile_is_monotone_in_spacing():
    plan_sp = _bang_plan()
    U = Polytope.symmetric_box([4.0])
    flags = [plan_transfer.feasible_at(dt, plan_sp, UNIT_MASS, U, np.eye(1), [1.0], ALPHA)[0]
             for dt in np.linspace(0.2, 1.0, 9)]
    assert flags == sorted(flags)


def test_hopeless_platform_is_infeasible():
    with pytest.raises(InfeasibleError):
        _transfer(0.25, ceiling_ratio=1.5)


def _exponential_plan(h):
    t = h * np.arange(int(round(1.0 / h)) + 1)
    return Plan(dt=h, configs=np.exp(t), rates=np.exp(t), inputs=np.exp(t[:-1]), alpha=0.0, rho=0.0, fuel=0.0,
                axes=(0,))


def test_endpoint_wrenches_shrink_quadratically_with_spacing():
    errors = []
    for h in (0.1, 0.05):
        wrenches = plan_transfer.required_wrenches(h, _exponential_plan(h), UNIT_MASS)
        errors.append(abs(wrenches[-1, 0] - np.e))
    assert errors[0] / errors[1] >= 3.5


def test_more_authority_never_slows_the_plan():
    spacings = [_transfer(authority).dt_star for authority in (0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(b <= a + 1e-9 for a, b in zip(spacings, spacings[1:]))
