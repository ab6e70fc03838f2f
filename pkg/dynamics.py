"""Rigid-body models of the space and underwater platforms.

State vector x = [p (3), q (4), v (3), w (3)]:
  p  inertial position (m), z axis up
  q  unit quaternion, scalar first, Hamilton product; R(q) rotates body
     vectors into the inertial frame
  v  body linear velocity (m/s)
  w  body angular velocity (rad/s)

Every model is written as M nu_dot + C(nu) nu + D(nu) nu + g(eta) = w + F(eta) d
and exposed in control-affine form x_dot = f(x) + g(x) w + C(x) d.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag
from scipy.spatial.transform import Rotation

from errors import DynamicsError

logger = logging.getLogger(__name__)

SPACE_LINEAR = "space_linear"
SPACE_NONLINEAR = "space_nonlinear"
UNDERWATER = "underwater"
MODEL_KINDS = (SPACE_LINEAR, SPACE_NONLINEAR, UNDERWATER)

STATE_DIM = 13
CONFIG_DIMS = ("x", "y", "z", "roll", "pitch", "yaw")
PLANAR_AXES = (0, 1, 5)
SPATIAL_AXES = (0, 1, 2, 3, 4, 5)
PLANAR_TWIST_MASK = np.array([1.0, 1.0, 0.0, 0.0, 0.0, 1.0])


# --- Quaternion and rotation helpers ---

def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def quat_mul(q, r):
    w0, x0, y0, z0 = q
    w1, x1, y1, z1 = r
    return np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_rotmat(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rate_matrix(q):
    """E(q) with q_dot = 0.5 E(q) w for body rates w."""
    w, x, y, z = q
    return np.array([[-x, -y, -z], [w, -z, y], [z, w, -x], [-y, x, w]])


def _to_scipy(q):
    return np.array([q[1], q[2], q[3], q[0]])


def _from_scipy(q):
    return np.array([q[3], q[0], q[1], q[2]])


def quat_exp(rotvec):
    return _from_scipy(Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_quat())


def quat_log(q):
    """Rotation vector of q (angle in [0, pi])."""
    return Rotation.from_quat(_to_scipy(q)).as_rotvec()


def euler_to_quat(euler):
    """(roll, pitch, yaw), intrinsic Z-Y-X, to a scalar-first quaternion."""
    roll, pitch, yaw = euler
    q = _from_scipy(Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_quat())
    return q if q[0] >= 0 else -q


def quat_to_euler(q):
    yaw, pitch, roll = Rotation.from_quat(_to_scipy(q)).as_euler("ZYX")
    return np.array([roll, pitch, yaw])


def wrap_angle(a):
    return (np.asarray(a) + math.pi) % (2.0 * math.pi) - math.pi


def euler_rates_to_body(euler, rates):
    roll, pitch, _ = euler
    droll, dpitch, dyaw = rates
    sr, cr = math.sin(roll), math.cos(roll)
    sp, cp = math.sin(pitch), math.cos(pitch)
    return np.array([
        droll - sp * dyaw,
        cr * dpitch + sr * cp * dyaw,
        -sr * dpitch + cr * cp * dyaw,
    ])


# --- Value types ---

@dataclass(frozen=True, eq=False)
class State:
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def as_vector(self):
        return np.concatenate([self.p, self.q, self.v, self.w]).astype(float)

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:7].copy(), x[7:10].copy(), x[10:13].copy())

    @classmethod
    def at_rest(cls, p=(0.0, 0.0, 0.0), q=(1.0, 0.0, 0.0, 0.0)):
        q = np.asarray(q, dtype=float)
        return cls(np.asarray(p, dtype=float), q / np.linalg.norm(q), np.zeros(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class Wrench:
    """Body-frame force (N) and torque (N m)."""

    force: np.ndarray
    torque: np.ndarray

    def as_vector(self):
        return np.concatenate([self.force, self.torque]).astype(float)

    @classmethod
    def from_vector(cls, w):
        w = np.asarray(w, dtype=float)
        return cls(w[:3].copy(), w[3:].copy())


@dataclass(frozen=True, eq=False)
class Disturbance:
    """Inertial-frame force (N) and body-frame torque (N m)."""

    force: np.ndarray
    torque: np.ndarray

    def as_vector(self):
        return np.concatenate([self.force, self.torque]).astype(float)

    @classmethod
    def from_vector(cls, d):
        d = np.asarray(d, dtype=float)
        return cls(d[:3].copy(), d[3:].copy())


def state_vector(x):
    return x.as_vector() if isinstance(x, State) else np.asarray(x, dtype=float)


def six_vector(w):
    if w is None:
        return np.zeros(6)
    if isinstance(w, (Wrench, Disturbance)):
        return w.as_vector()
    return np.asarray(w, dtype=float).reshape(6)


@dataclass(frozen=True, eq=False)
class RigidBodyModel:
    kind: str
    mass: float
    inertia: np.ndarray
    added_mass: np.ndarray = field(default_factory=lambda: np.zeros(6))
    d_lin: np.ndarray = field(default_factory=lambda: np.zeros(6))
    d_quad: np.ndarray = field(default_factory=lambda: np.zeros(6))
    weight: float = 0.0
    buoyancy: float = 0.0
    r_b: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    allocation: np.ndarray | None = None
    mu_min: np.ndarray | None = None
    mu_max: np.ndarray | None = None
    planar: bool = False
    name: str = ""

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DynamicsError(f"unknown model kind '{self.kind}'")
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.ndim == 1:
            inertia = np.diag(inertia)
        vectors = {}
        for key, size in (("added_mass", 6), ("d_lin", 6), ("d_quad", 6), ("r_b", 3), ("r_g", 3)):
            vectors[key] = np.asarray(getattr(self, key), dtype=float).reshape(size)
        if self.kind != UNDERWATER:
            if (np.any(vectors["d_lin"]) or np.any(vectors["d_quad"]) or np.any(vectors["added_mass"])
                    or self.weight or self.buoyancy):
                raise DynamicsError(f"{self.kind} model must not carry damping, added mass or restoring terms")
        m = float(self.mass)
        S = skew(vectors["r_g"])
        M = np.block([[m * np.eye(3), -m * S], [m * S, inertia]]) + np.diag(vectors["added_mass"])
        if not np.allclose(M, M.T, atol=1e-12):
            raise DynamicsError("mass-inertia matrix must be symmetric")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError as e:
            raise DynamicsError("mass-inertia matrix must be positive definite") from e
        object.__setattr__(self, "inertia", inertia)
        for key, value in vectors.items():
            object.__setattr__(self, key, value)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "M_inv", np.linalg.inv(M))
        if self.allocation is not None:
            object.__setattr__(self, "allocation", np.asarray(self.allocation, dtype=float))

    @property
    def twist_mask(self):
        return PLANAR_TWIST_MASK if self.planar else np.ones(6)

    @property
    def axes(self):
        return PLANAR_AXES if self.planar else SPATIAL_AXES

    # --- Terms of the standard form ---
    def coriolis(self, nu):
        """C(nu) nu in Kirchhoff form for the full (rigid + added) mass matrix."""
        if self.kind == SPACE_LINEAR:
            return np.zeros(6)
        p = self.M @ nu
        v, w = nu[:3], nu[3:]
        return np.concatenate([np.cross(w, p[:3]), np.cross(w, p[3:]) + np.cross(v, p[:3])])

    def damping(self, nu):
        return (self.d_lin + self.d_quad * np.abs(nu)) * nu

    def restoring(self, q):
        if not (self.weight or self.buoyancy):
            return np.zeros(6)
        Rt = quat_to_rotmat(q).T
        fg = Rt @ np.array([0.0, 0.0, -self.weight])
        fb = Rt @ np.array([0.0, 0.0, self.buoyancy])
        return -np.concatenate([fg + fb, np.cross(self.r_g, fg) + np.cross(self.r_b, fb)])

    def disturbance_map(self, q):
        """F(eta): inertial force rotated into the body frame, body torque unchanged."""
        return block_diag(quat_to_rotmat(q).T, np.eye(3))

    def nonlinear_terms(self, x):
        """C(nu)nu + D(nu)nu + g(eta)."""
        nu = x[7:13]
        return self.coriolis(nu) + self.damping(nu) + self.restoring(x[3:7])


def derivative(m, x, w=None, d=None):
    """x_dot = f(x) + g(x) w + C(x) d for a 13-dim state."""
    x = state_vector(x)
    w = six_vector(w)
    d = six_vector(d)
    q = x[3:7]
    nu = x[7:13]
    mask = m.twist_mask
    R = quat_to_rotmat(q)
    generalized = mask * w + mask * (m.disturbance_map(q) @ d) - m.nonlinear_terms(x)
    nu_dot = mask * (m.M_inv @ generalized)
    p_dot = R @ nu[:3]
    if m.planar:
        p_dot[2] = 0.0
    q_dot = 0.5 * quat_rate_matrix(q) @ nu[3:]
    out = np.concatenate([p_dot, q_dot, nu_dot])
    if not np.all(np.isfinite(out)):
        raise DynamicsError("non-finite state derivative")
    return out


def drift(m, x):
    return derivative(m, x, None, None)


def input_matrix(m, x):
    """g(x): 13 x 6, zero on the kinematic block."""
    g = np.zeros((STATE_DIM, 6))
    mask = m.twist_mask
    g[7:13] = (mask[:, None] * m.M_inv) * mask[None, :]
    return g


def disturbance_matrix(m, x):
    x = state_vector(x)
    return input_matrix(m, x) @ m.disturbance_map(x[3:7])


def rk4_step(m, x, w=None, d=None, dt=0.1):
    """One classical RK4 step; `w` may be a constant wrench or a law w(x)."""
    if dt <= 0:
        raise DynamicsError(f"dt must be positive, got {dt}")
    as_state = isinstance(x, State)
    x0 = state_vector(x)
    d = six_vector(d)
    if callable(w):
        law = w
    else:
        constant = six_vector(w)
        law = lambda _x: constant  # noqa: E731

    def f(xs):
        return derivative(m, xs, law(xs), d)

    k1 = f(x0)
    k2 = f(x0 + 0.5 * dt * k1)
    k3 = f(x0 + 0.5 * dt * k2)
    k4 = f(x0 + dt * k3)
    x1 = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    x1[3:7] /= np.linalg.norm(x1[3:7])
    if not np.all(np.isfinite(x1)):
        raise DynamicsError("integration blow-up: non-finite state after RK4 step")
    return State.from_vector(x1) if as_state else x1


def wrench_from_thrusts(m, mu):
    """w = G mu; returns (Wrench, in_bounds)."""
    if m.allocation is None:
        raise DynamicsError(f"model '{m.name}' has no thruster allocation")
    mu = np.asarray(mu, dtype=float)
    in_bounds = True
    if m.mu_min is not None and m.mu_max is not None:
        in_bounds = bool(np.all(mu >= np.asarray(m.mu_min) - 1e-12) and np.all(mu <= np.asarray(m.mu_max) + 1e-12))
    if not in_bounds:
        logger.warning("[Dynamics] thrust vector outside [mu_min, mu_max] for model '%s'", m.name)
    return Wrench.from_vector(m.allocation @ mu), in_bounds


# --- Inverse dynamics ---

def _configs_arrays(configs):
    if isinstance(configs, np.ndarray) and configs.ndim == 2 and configs.shape[1] == 7:
        P, Q = configs[:, :3].copy(), configs[:, 3:7].copy()
    else:
        P = np.array([np.asarray(p, dtype=float) for p, _ in configs])
        Q = np.array([np.asarray(q, dtype=float) for _, q in configs])
    Q /= np.linalg.norm(Q, axis=1, keepdims=True)
    for k in range(1, len(Q)):
        if np.dot(Q[k - 1], Q[k]) < 0.0:
            Q[k] = -Q[k]
    return P, Q


def _second_difference(P, dt):
    n = len(P)
    acc = np.empty_like(P)
    acc[1:-1] = (P[2:] - 2.0 * P[1:-1] + P[:-2]) / dt ** 2
    if n >= 4:
        acc[0] = (2.0 * P[0] - 5.0 * P[1] + 4.0 * P[2] - P[3]) / dt ** 2
        acc[-1] = (2.0 * P[-1] - 5.0 * P[-2] + 4.0 * P[-3] - P[-4]) / dt ** 2
    else:
        acc[0], acc[-1] = acc[1], acc[-2]
    return acc


def _body_rates(Q, dt):
    """Body rates and accelerations at the nodes from midpoint increments."""
    n = len(Q)
    half = np.empty((n - 1, 3))
    for k in range(n - 1):
        increment = quat_log(quat_mul(quat_conj(Q[k]), Q[k + 1]))
        if np.linalg.norm(increment) > math.pi - 1e-9:
            raise DynamicsError(f"rotation between samples {k} and {k + 1} reaches pi; attitude is ambiguous")
        half[k] = increment / dt

    omega = np.empty((n, 3))
    omega_dot = np.empty((n, 3))
    omega[1:-1] = 0.5 * (half[:-1] + half[1:])
    omega_dot[1:-1] = (half[1:] - half[:-1]) / dt
    if n >= 4:
        omega[0] = 1.875 * half[0] - 1.25 * half[1] + 0.375 * half[2]
        omega[-1] = 1.875 * half[-1] - 1.25 * half[-2] + 0.375 * half[-3]
        omega_dot[0] = (-2.0 * half[0] + 3.0 * half[1] - half[2]) / dt
        omega_dot[-1] = (2.0 * half[-1] - 3.0 * half[-2] + half[-3]) / dt
    else:
        omega[0] = 1.5 * half[0] - 0.5 * half[1]
        omega[-1] = 1.5 * half[-1] - 0.5 * half[-2]
        omega_dot[0] = omega_dot[-1] = omega_dot[1]
    return omega, omega_dot


def inverse_dynamics(m, configs, dt):
    """Body wrenches that make the model follow a pose sequence spaced dt apart.

    Endpoints use one-sided second-order stencils (four samples when available).

    :param configs: sequence of (p, q) pairs or an (n, 7) array [p, q]
    :return: (n, 6) array of wrenches [F, tau], with d = 0
    """
    if dt <= 0:
        raise DynamicsError(f"dt must be positive, got {dt}")
    P, Q = _configs_arrays(configs)
    n = len(P)
    if n < 3:
        raise DynamicsError(f"inverse dynamics needs at least 3 configurations, got {n}")

    p_dot = np.gradient(P, dt, axis=0, edge_order=2)
    p_ddot = _second_difference(P, dt)
    omega, omega_dot = _body_rates(Q, dt)

    wrenches = np.empty((n, 6))
    mask = m.twist_mask
    for k in range(n):
        Rt = quat_to_rotmat(Q[k]).T
        v = Rt @ p_dot[k]
        v_dot = Rt @ p_ddot[k] - np.cross(omega[k], v)
        nu = np.concatenate([v, omega[k]])
        nu_dot = np.concatenate([v_dot, omega_dot[k]]) * mask
        x = np.concatenate([P[k], Q[k], nu * mask])
        wrenches[k] = mask * (m.M @ nu_dot + m.nonlinear_terms(x))
    return wrenches


def feedback_equivalence_input(x, u, m_sp, m_uw):
    """u_uw = g_uw(x)^+ (f_sp(x) + g_sp(x) u - f_uw(x))."""
    x = state_vector(x)
    u = six_vector(u)
    g_uw = input_matrix(m_uw, x)
    rhs = drift(m_sp, x) + input_matrix(m_sp, x) @ u - drift(m_uw, x)
    return np.linalg.pinv(g_uw) @ rhs


# --- Linear planner model ---

def rigid_mass_matrix(m):
    return block_diag(m.mass * np.eye(3), m.inertia)


def planner_matrices(m, dt, axes=None):
    """Exact zero-order-hold double integrator over the given configuration axes.

    State [eta_a, eta_a_dot] with eta the configuration (position, Euler
    angles); input the inertial force / Euler torque on the same axes.
    """
    if dt <= 0:
        raise DynamicsError(f"dt must be positive, got {dt}")
    axes = list(m.axes if axes is None else axes)
    M_a = rigid_mass_matrix(m)[np.ix_(axes, axes)]
    M_inv = np.linalg.inv(M_a)
    n = len(axes)
    eye = np.eye(n)
    A = np.block([[eye, dt * eye], [np.zeros((n, n)), eye]])
    B = np.vstack([0.5 * dt ** 2 * M_inv, dt * M_inv])
    return A, B


# --- Configuration helpers ---

def expand_axes(values, axes):
    """Embed active-axis values into the 6-dim [x y z roll pitch yaw] layout."""
    full = np.zeros(6)
    full[list(axes)] = values
    return full


def pose_from_config(cfg6):
    cfg6 = np.asarray(cfg6, dtype=float)
    return cfg6[:3].copy(), euler_to_quat(cfg6[3:6])


def config_from_state(x, reference=None):
    """[x y z roll pitch yaw]; angles unwrapped toward `reference` when given."""
    x = state_vector(x)
    cfg = np.concatenate([x[0:3], quat_to_euler(x[3:7])])
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        cfg[3:] = ref[3:] + wrap_angle(cfg[3:] - ref[3:])
    return cfg


def state_from_config(cfg6, rates6=None):
    """Full state from configuration and configuration rates (Euler rates)."""
    cfg6 = np.asarray(cfg6, dtype=float)
    rates6 = np.zeros(6) if rates6 is None else np.asarray(rates6, dtype=float)
    p, q = pose_from_config(cfg6)
    v = quat_to_rotmat(q).T @ rates6[:3]
    w = euler_rates_to_body(cfg6[3:], rates6[3:])
    return np.concatenate([p, q, v, w])
