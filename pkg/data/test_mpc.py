import numpy as np
import pytest
from scipy.linalg import solve_discrete_are

import control_mpc
import dynamics
from control_mpc import MpcConfig, MpcController, Reference
from errors import DynamicsError, GeometryError
from planner_milp import Plan
from polytope_geom import Polytope

SPATIAL = dynamics.SPATIAL_AXES
PLANAR = dynamics.PLANAR_AXES


def _config(axes, input_set, N=20, dt=0.1, **kwargs):
    n_u = len(axes)
    fields = dict(Q=np.eye(12), R=np.eye(n_u), P=np.eye(12), input_set=input_set, axes=axes, N=N, dt=dt)
    fields.update(kwargs)
    return MpcConfig(**fields)


def _rollout_reference(model, x0, u, steps, dt, axes):
    """Reference generated by the design model itself."""
    states = [np.asarray(x0, dtype=float)]
    for _ in range(steps):
        states.append(dynamics.rk4_step(model, states[-1], u, None, dt))
    states = np.array(states)
    configs = np.array([dynamics.config_from_state(x) for x in states])
    return Reference(dt=dt, configs=configs, states=states, inputs=np.tile(u, (steps + 1, 1)), axes=axes)


def _moving_planar_state():
    return dynamics.state_from_config([1.0, 0.5, 0.0, 0.0, 0.0, 0.4], [0.05, -0.02, 0.0, 0.0, 0.0, 0.03])


# --- LQR equivalence ---

def test_unconstrained_tick_matches_infinite_horizon_lqr(space_model):
    dt, N = 0.1, 50
    rest = dynamics.State.at_rest().as_vector()
    A, B, _ = control_mpc.linearize(space_model, rest, np.zeros(6), None, rest, dt, SPATIAL)
    Q, R = np.diag(np.repeat([10.0, 10.0, 1.0, 1.0], 3)), np.eye(6)
    P = solve_discrete_are(A, B, Q, R)
    P = 0.5 * (P + P.T)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)

    cfg = MpcConfig(Q=Q, R=R, P=P, input_set=Polytope.symmetric_box([1e6] * 6), axes=SPATIAL, N=N, dt=dt)
    reference = Reference.hold(rest, np.zeros(6), N + 5, dt, SPATIAL)
    e = np.array([0.02, -0.01, 0.015, 0.01, -0.005, 0.008, 0.001, 0.0, -0.002, 0.0, 0.001, 0.0])
    x_hat = control_mpc.retract(rest, e)
    solution = MpcController(cfg, reference, space_model).step(0, x_hat)

    expected = -K @ control_mpc.state_error(x_hat, rest)
    assert np.linalg.norm(solution.u0 - expected) <= 0.02 * np.linalg.norm(expected)
    assert not solution.failed
    assert solution.kkt_residual < 1e-6


# --- Feed-forward ---

def test_consistent_reference_returns_the_plan_input(planar_space_model):
    u = np.array([0.2, -0.1, 0.0, 0.0, 0.0, 0.01])
    reference = _rollout_reference(planar_space_model, _moving_planar_state(), u, 40, 0.1, PLANAR)
    cfg = _config(PLANAR, Polytope.symmetric_box([1.42, 1.42, 0.24]))
    solution = MpcController(cfg, reference, planar_space_model).step(0, reference.states[0])
    np.testing.assert_allclose(solution.u0, u, atol=1e-9)
    assert solution.cost == pytest.approx(0.0, abs=1e-12)


def test_disturbance_estimate_is_cancelled(planar_space_model):
    u = np.array([0.2, -0.1, 0.0, 0.0, 0.0, 0.01])
    reference = _rollout_reference(planar_space_model, _moving_planar_state(), u, 40, 0.1, PLANAR)
    cfg = _config(PLANAR, Polytope.symmetric_box([1.42, 1.42, 0.24]))
    d_hat = np.array([0.1, 0.05, 0.0, 0.0, 0.0, -0.002])
    x0 = reference.states[0]
    solution = control_mpc.mpc_step_space(cfg, x0, reference, 0, d_hat, planar_space_model)
    expected = planar_space_model.twist_mask * (u - planar_space_model.disturbance_map(x0[3:7]) @ d_hat)
    np.testing.assert_allclose(solution.u0, expected, atol=1e-9)


# --- Constraints ---

def test_input_set_is_respected_far_from_the_reference(planar_space_model):
    rest = dynamics.State.at_rest().as_vector()
    U = Polytope.symmetric_box([1.42, 1.42, 0.24])
    cfg = _config(PLANAR, U, Q=np.diag(np.repeat([100.0, 100.0, 10.0, 10.0], 3)))
    reference = Reference.hold(rest, np.zeros(6), 30, 0.1, PLANAR)
    x_hat = dynamics.state_from_config([2.0, -1.5, 0.0, 0.0, 0.0, 1.0])
    solution = MpcController(cfg, reference, planar_space_model).step(0, x_hat)
    assert U.contains(solution.u0[list(PLANAR)], tol=1e-7)
    assert solution.active > 0
    assert np.max(np.abs(solution.u0[[2, 3, 4]])) == 0.0


def test_underwater_mode_keeps_transformed_wrench_inside(planar_space_model, planar_underwater_model):
    rest = dynamics.State.at_rest().as_vector()
    U_uw = Polytope.symmetric_box([21.0, 21.0, 17.0])
    cfg = _config(PLANAR, Polytope.symmetric_box([1.42, 1.42, 0.24]), mode=control_mpc.UNDERWATER_EQUIVALENT,
                  uw_input_set=U_uw)
    reference = Reference.hold(rest, np.zeros(6), 30, 0.1, PLANAR)
    x_hat = dynamics.state_from_config([0.5, -0.3, 0.0, 0.0, 0.0, 0.2], [0.1, 0.0, 0.0, 0.0, 0.0, 0.05])
    solution = control_mpc.mpc_step_underwater(cfg, x_hat, reference, 0, None, planar_space_model,
                                               planar_underwater_model)
    w = solution.applied()
    assert U_uw.contains(w[list(PLANAR)], tol=1e-6)
    expected = dynamics.feedback_equivalence_input(x_hat, solution.u0, planar_space_model, planar_underwater_model)
    np.testing.assert_allclose(w, solution.scale * planar_underwater_model.twist_mask * expected, atol=1e-9)


def test_transform_scales_radially_onto_the_underwater_set(planar_space_model, planar_underwater_model):
    rest = dynamics.State.at_rest().as_vector()
    U_uw = Polytope.symmetric_box([0.5, 0.5, 0.1])
    cfg = _config(PLANAR, Polytope.symmetric_box([1.42, 1.42, 0.24]), mode=control_mpc.UNDERWATER_EQUIVALENT,
                  uw_input_set=U_uw)
    controller = MpcController(cfg, Reference.hold(rest, np.zeros(6), 30, 0.1, PLANAR), planar_space_model,
                               planar_underwater_model)
    w, scale = controller.transform(rest, np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
    assert scale == pytest.approx(0.5 / (28.0 + 12.0) * 16.8)
    assert U_uw.violation(w[list(PLANAR)]) == pytest.approx(0.0, abs=1e-12)


# --- Configuration checks ---

def test_config_from_dict_expands_block_weights():
    cfg = MpcConfig.from_dict({"N": 10, "dt": 0.2, "q": [100, 100, 10, 10], "r": [1, 1, 10]}, PLANAR,
                              Polytope.symmetric_box([1.0, 1.0, 1.0]))
    np.testing.assert_allclose(np.diag(cfg.Q), np.repeat([100.0, 100.0, 10.0, 10.0], 3))
    np.testing.assert_allclose(np.diag(cfg.R), [1.0, 1.0, 10.0])
    np.testing.assert_allclose(cfg.P, cfg.Q)
    assert cfg.N == 10 and cfg.dt == 0.2


def test_config_rejections():
    U = Polytope.symmetric_box([1.0, 1.0, 1.0])
    with pytest.raises(GeometryError):
        _config(PLANAR, U, R=np.eye(2))
    with pytest.raises(GeometryError):
        _config(PLANAR, U, R=np.zeros((3, 3)))
    with pytest.raises(GeometryError):
        _config(PLANAR, U, mode=control_mpc.UNDERWATER_EQUIVALENT)
    with pytest.raises(GeometryError):
        _config(PLANAR, Polytope.symmetric_box([1.0, 1.0]))
    with pytest.raises(GeometryError):
        _config(PLANAR, U, N=0)


def test_controller_requires_matching_reference_period(planar_space_model):
    rest = dynamics.State.at_rest().as_vector()
    cfg = _config(PLANAR, Polytope.symmetric_box([1.0, 1.0, 1.0]))
    with pytest.raises(GeometryError):
        MpcController(cfg, Reference.hold(rest, np.zeros(6), 30, 0.2, PLANAR), planar_space_model)


# --- Reference ---

def test_reference_from_plan_interpolates_the_poses(planar_space_model):
    a = np.array([0.1, -0.05, 0.01])
    t = np.arange(4.0)
    plan = Plan(dt=1.0, configs=0.5 * np.outer(t ** 2, a), rates=np.outer(t, a), inputs=np.tile(a, (3, 1)),
                alpha=1.0, rho=0.1, fuel=0.0, axes=PLANAR)
    reference = Reference.from_plan(plan, planar_space_model, 0.1)
    assert reference.length == 31
    np.testing.assert_allclose(reference.configs[10][list(PLANAR)], plan.configs[1], atol=1e-12)
    np.testing.assert_allclose(reference.configs[15][list(PLANAR)], 0.5 * 1.5 ** 2 * a, atol=1e-12)
    with pytest.raises(DynamicsError):
        Reference.from_plan(plan, planar_space_model, 0.7)
