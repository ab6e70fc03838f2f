"""Extended Kalman filter for body velocities and a random-walk disturbance wrench.

Filter state [v, w, F_d, tau_d]: body linear and angular velocity, the
disturbance force (inertial frame) and torque (body frame). Only the
velocities are measured; attitude comes from outside the filter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from dynamics import Disturbance, six_vector, derivative, rk4_step
from errors import DynamicsError

logger = logging.getLogger(__name__)

STATE_SIZE = 12
MEASUREMENT_SIZE = 6
JACOBIAN_STEP = 1e-6
H = np.hstack([np.eye(MEASUREMENT_SIZE), np.zeros((MEASUREMENT_SIZE, MEASUREMENT_SIZE))])


@dataclass(frozen=True)
class EkfConfig:
    """Diagonal noise levels; process noise is per second."""

    q_velocity: float = 1e-4
    q_angular: float = 1e-4
    q_force: float = 1e-2
    q_torque: float = 1e-3
    r_measurement: float = 1e-4
    p0_velocity: float = 1e-4
    p0_disturbance: float = 1.0

    @classmethod
    def from_dict(cls, data):
        data = data or {}
        return cls(**{k: float(v) for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True, eq=False)
class EkfState:
    mean: np.ndarray
    cov: np.ndarray
    Q_p: np.ndarray
    R_m: np.ndarray
    model: object

    @classmethod
    def fresh(cls, model, config=None, velocity=None):
        """Zero disturbance estimate; planar models never excite the masked channels."""
        config = config or EkfConfig()
        mask = np.concatenate([model.twist_mask, model.twist_mask])
        q_diag = np.repeat([config.q_velocity, config.q_angular, config.q_force, config.q_torque], 3)
        p_diag = np.repeat([config.p0_velocity, config.p0_disturbance], 6)
        mean = np.zeros(STATE_SIZE)
        if velocity is not None:
            mean[:6] = np.asarray(velocity, dtype=float)
        return cls(
            mean=mean * mask,
            cov=np.diag(p_diag * mask),
            Q_p=np.diag(q_diag * mask),
            R_m=config.r_measurement * np.eye(MEASUREMENT_SIZE),
            model=model,
        )


def _full_state(q, nu):
    return np.concatenate([np.zeros(3), np.asarray(q, dtype=float), nu])


def _velocity_rate(model, z, w, q):
    return derivative(model, _full_state(q, z[:6]), w, z[6:])[7:13]


def _jacobian(model, z, w, q):
    """Continuous-time Jacobian of [nu_dot, 0] by central differences."""
    A = np.zeros((STATE_SIZE, STATE_SIZE))
    for j in range(STATE_SIZE):
        step = JACOBIAN_STEP * max(1.0, abs(z[j]))
        hi, lo = z.copy(), z.copy()
        hi[j] += step
        lo[j] -= step
        A[:6, j] = (_velocity_rate(model, hi, w, q) - _velocity_rate(model, lo, w, q)) / (2.0 * step)
    return A


def _symmetrize(P):
    return 0.5 * (P + P.T)


def ekf_predict(e, w_cmd, q, dt):
    """Propagate the mean with RK4 and the covariance with exp(A dt)."""
    if dt <= 0:
        raise DynamicsError(f"dt must be positive, got {dt}")
    w = six_vector(w_cmd)
    q = np.asarray(q, dtype=float)
    x_next = rk4_step(e.model, _full_state(q, e.mean[:6]), w, e.mean[6:], dt)
    mean = e.mean.copy()
    mean[:6] = x_next[7:13]

    Phi = expm(_jacobian(e.model, e.mean, w, q) * dt)
    cov = _symmetrize(Phi @ e.cov @ Phi.T + e.Q_p * dt)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise DynamicsError("non-finite EKF prediction", stage="estimation")
    return replace(e, mean=mean, cov=cov)


def ekf_update(e, z):
    """Velocity measurement update in Joseph form."""
    z = np.asarray(z, dtype=float).ravel()
    if z.size != MEASUREMENT_SIZE or not np.all(np.isfinite(z)):
        raise DynamicsError("measurement must be 6 finite velocity components", stage="estimation")
    innovation = z * e.model.twist_mask - H @ e.mean
    S = H @ e.cov @ H.T + e.R_m
    gain = np.linalg.solve(S, H @ e.cov).T
    mean = e.mean + gain @ innovation
    I_KH = np.eye(STATE_SIZE) - gain @ H
    cov = _symmetrize(I_KH @ e.cov @ I_KH.T + gain @ e.R_m @ gain.T)
    return replace(e, mean=mean, cov=cov)


def disturbance_estimate(e):
    return Disturbance.from_vector(e.mean[6:])


class DisturbanceEkf:
    """Stateful wrapper: predict with the last command, then update with z."""

    def __init__(self, model, config=None, velocity=None):
        self.state = EkfState.fresh(model, config, velocity)

    @property
    def velocity(self):
        return self.state.mean[:6].copy()

    def step(self, w_cmd, q, dt, z):
        self.state = ekf_update(ekf_predict(self.state, w_cmd, q, dt), z)
        return self.estimate()

    def estimate(self):
        return disturbance_estimate(self.state)
