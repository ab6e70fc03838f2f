import math

import numpy as np
import pytest

import dynamics
import estimation_ekf
from dynamics import RigidBodyModel
from errors import DynamicsError
from estimation_ekf import DisturbanceEkf, EkfConfig, EkfState

DT = 0.01
UNIT_MASS = RigidBodyModel(kind="space_linear", mass=1.0, inertia=[1.0, 1.0, 1.0], name="unit")


def _track_constant_force(model, q, d, rng, seconds=2.0, noise=1e-3):
    """Fly the model under a constant disturbance and run the filter on noisy velocities."""
    x = np.concatenate([np.zeros(3), q, np.zeros(6)])
    ekf = DisturbanceEkf(model)
    for _ in range(int(round(seconds / DT))):
        x = dynamics.rk4_step(model, x, None, d, DT)
        z = x[7:13] + noise * rng.normal(size=6)
        ekf.step(np.zeros(6), x[3:7], DT, z)
    return ekf


def test_constant_force_is_found_within_two_seconds(rng):
    d = np.array([0.3, 0.0, 0.0, 0.0, 0.0, 0.0])
    ekf = _track_constant_force(UNIT_MASS, np.array([1.0, 0.0, 0.0, 0.0]), d, rng)
    estimate = ekf.estimate()
    assert estimate.force[0] == pytest.approx(0.3, rel=0.05)
    assert np.max(np.abs(estimate.force[1:])) < 0.015
    assert np.max(np.abs(estimate.torque)) < 0.015


def test_force_estimate_stays_in_the_inertial_frame(rng):
    q = dynamics.euler_to_quat([0.0, 0.0, math.pi / 2])
    d = np.array([0.3, 0.0, 0.0, 0.0, 0.0, 0.0])
    estimate = _track_constant_force(UNIT_MASS, q, d, rng).estimate()
    assert estimate.force[0] == pytest.approx(0.3, rel=0.05)
    assert abs(estimate.force[1]) < 0.015


def test_body_torque_is_found(rng):
    d = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.2])
    estimate = _track_constant_force(UNIT_MASS, np.array([1.0, 0.0, 0.0, 0.0]), d, rng, seconds=3.0).estimate()
    assert estimate.torque[2] == pytest.approx(0.2, rel=0.05)


def test_planar_filter_leaves_masked_channels_at_zero(planar_space_model, rng):
    d = np.array([0.5, -0.2, 0.0, 0.0, 0.0, 0.01])
    ekf = _track_constant_force(planar_space_model, np.array([1.0, 0.0, 0.0, 0.0]), d, rng, seconds=6.0)
    mean = ekf.state.mean
    np.testing.assert_array_equal(mean[[2, 3, 4, 8, 9, 10]], 0.0)
    assert ekf.estimate().force[0] == pytest.approx(0.5, rel=0.05)


def test_covariance_stays_symmetric_and_positive(rng):
    ekf = _track_constant_force(UNIT_MASS, np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(6), rng, seconds=0.5)
    cov = ekf.state.cov
    np.testing.assert_allclose(cov, cov.T)
    assert np.min(np.linalg.eigvalsh(cov)) > 0.0


def test_velocity_prior_is_taken():
    ekf = DisturbanceEkf(UNIT_MASS, velocity=[0.1, 0.0, 0.0, 0.0, 0.0, 0.2])
    np.testing.assert_allclose(ekf.velocity, [0.1, 0.0, 0.0, 0.0, 0.0, 0.2])


def test_bad_inputs_are_rejected():
    state = EkfState.fresh(UNIT_MASS)
    with pytest.raises(DynamicsError):
        estimation_ekf.ekf_update(state, np.zeros(5))
    with pytest.raises(DynamicsError):
        estimation_ekf.ekf_update(state, np.full(6, np.nan))
    with pytest.raises(DynamicsError):
        estimation_ekf.ekf_predict(state, np.zeros(6), [1.0, 0.0, 0.0, 0.0], 0.0)


def test_config_from_dict_ignores_unknown_keys():
    cfg = EkfConfig.from_dict({"q_force": "0.5", "unused": 3})
    assert cfg.q_force == 0.5
    assert cfg.r_measurement == EkfConfig().r_measurement
