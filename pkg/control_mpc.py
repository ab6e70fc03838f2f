"""Plan tracking with a linear time-varying QP per controller tick.

Space mode tracks the plan on the space design model with a hard input
constraint. Underwater-equivalent mode keeps the same design model but
constrains the wrench the feedback-equivalence law would send to the
underwater vehicle, then applies that transformed wrench.

The QP works on a 12-dim error state [dp, dtheta, dv, dw] around the
reference; attitude error is multiplicative, q = q_ref * exp(dtheta).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import quadprog
from scipy.interpolate import CubicHermiteSpline

from dynamics import (
    config_from_state,
    expand_axes,
    feedback_equivalence_input,
    input_matrix,
    inverse_dynamics,
    pose_from_config,
    quat_conj,
    quat_exp,
    quat_log,
    quat_mul,
    rk4_step,
    six_vector,
    state_from_config,
    state_vector,
)
from errors import DynamicsError, GeometryError
from polytope_geom import Polytope

logger = logging.getLogger(__name__)

SPACE = "space"
UNDERWATER_EQUIVALENT = "underwater_equivalent"
MODES = (SPACE, UNDERWATER_EQUIVALENT)

ERROR_DIM = 12
LINEARIZATION_STEP = 1e-6
SLACK_PENALTY = 1e6
SLACK_REGULARIZATION = 1e-6
TRANSFORM_TOL = 1e-6
PSD_FLOOR = -1e-10
R_FLOOR = 1e-8


# --- Error-state helpers ---

def state_error(x, x_ref):
    """[p - p_ref, log(q_ref^-1 q), v - v_ref, w - w_ref]."""
    dq = quat_mul(quat_conj(x_ref[3:7]), x[3:7])
    if dq[0] < 0.0:
        dq = -dq
    return np.concatenate([x[0:3] - x_ref[0:3], quat_log(dq), x[7:10] - x_ref[7:10], x[10:13] - x_ref[10:13]])


def retract(x_ref, e):
    q = quat_mul(x_ref[3:7], quat_exp(e[3:6]))
    return np.concatenate([x_ref[0:3] + e[0:3], q / np.linalg.norm(q), x_ref[7:10] + e[6:9], x_ref[10:13] + e[9:12]])


def _diag_weights(values, size, name):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if values.size == 1:
        values = np.full(size, values[0])
    elif values.size == 4 and size == ERROR_DIM:
        values = np.repeat(values, 3)
    if values.size != size:
        raise GeometryError(f"{name} weights need 1, 4 or {size} entries, got {values.size}")
    return np.diag(values)


# --- Configuration and results ---

@dataclass(frozen=True, eq=False)
class MpcConfig:
    """Horizon, weights and constraint sets of one controller.

    Q and P act on the 12-dim error state; R acts on the active input
    channels `axes`. input_set and uw_input_set are over the same channels.
    """

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    input_set: Polytope
    axes: tuple
    N: int = 20
    dt: float = 0.1
    workspace: Polytope | None = None
    mode: str = SPACE
    uw_input_set: Polytope | None = None
    slack_penalty: float = SLACK_PENALTY
    sqp_iterations: int = 0
    transform_tol: float = TRANSFORM_TOL

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(int(a) for a in self.axes))
        for name in ("Q", "R", "P"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n_u = len(self.axes)
        if self.Q.shape != (ERROR_DIM, ERROR_DIM) or self.P.shape != (ERROR_DIM, ERROR_DIM):
            raise GeometryError("Q and P must be 12x12")
        if self.R.shape != (n_u, n_u):
            raise GeometryError(f"R must be {n_u}x{n_u} for axes {self.axes}")
        if min(np.linalg.eigvalsh(self.Q)) < PSD_FLOOR or min(np.linalg.eigvalsh(self.P)) < PSD_FLOOR:
            raise GeometryError("Q and P must be positive semidefinite")
        if min(np.linalg.eigvalsh(self.R)) < R_FLOOR:
            raise GeometryError("R must be positive definite")
        if self.N < 1 or self.dt <= 0:
            raise GeometryError(f"need N >= 1 and dt > 0, got N={self.N}, dt={self.dt}")
        if self.mode not in MODES:
            raise GeometryError(f"unknown MPC mode '{self.mode}'")
        if self.mode == UNDERWATER_EQUIVALENT and self.uw_input_set is None:
            raise GeometryError("underwater-equivalent mode needs the underwater input set")
        for p in (self.input_set, self.uw_input_set):
            if p is not None and p.dim != n_u:
                raise GeometryError(f"input set acts on {p.dim} channels, axes has {n_u}")
        if self.workspace is not None and self.workspace.dim != 3:
            raise GeometryError("workspace half-spaces act on the 3-dim position")

    @classmethod
    def from_dict(cls, data, axes, input_set, workspace=None, uw_input_set=None, mode=SPACE):
        data = data or {}
        n_u = len(axes)
        Q = _diag_weights(data.get("q", [10.0, 10.0, 1.0, 1.0]), ERROR_DIM, "Q")
        P = _diag_weights(data.get("p", data.get("q", [10.0, 10.0, 1.0, 1.0])), ERROR_DIM, "P")
        R = _diag_weights(data.get("r", 1.0), n_u, "R")
        return cls(
            Q=Q, R=R, P=P, input_set=input_set, axes=axes,
            N=int(data.get("N", 20)),
            dt=float(data.get("dt", 0.1)),
            workspace=workspace,
            mode=mode,
            uw_input_set=uw_input_set,
            slack_penalty=float(data.get("slack_penalty", SLACK_PENALTY)),
            sqp_iterations=int(data.get("sqp_iterations", 0)),
        )


@dataclass(frozen=True, eq=False)
class MpcSolution:
    u0: np.ndarray
    predicted: np.ndarray
    cost: float
    slack: float = 0.0
    active: int = 0
    kkt_residual: float = 0.0
    u_transformed: np.ndarray | None = None
    scale: float = 1.0
    failed: bool = False
    qp_iterations: int = 0

    @property
    def scaled(self):
        return self.scale < 1.0

    def applied(self):
        """Wrench sent to the plant: the transformed one in underwater mode."""
        return self.u0 if self.u_transformed is None else self.u_transformed


# --- Reference ---

@dataclass(frozen=True, eq=False)
class Reference:
    """Plan resampled at the controller period with design-model wrenches."""

    dt: float
    configs: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    axes: tuple

    @property
    def length(self):
        return self.states.shape[0]

    @property
    def times(self):
        return self.dt * np.arange(self.length)

    def index(self, k):
        return min(max(int(k), 0), self.length - 1)

    @classmethod
    def from_plan(cls, plan, model, dt):
        """Cubic Hermite through plan configurations and rates (exact for ZOH double integrators)."""
        steps = int(round(plan.duration / dt))
        if steps < 2 or abs(steps * dt - plan.duration) > 1e-9 * max(1.0, plan.duration):
            raise DynamicsError(f"controller dt {dt} does not divide the plan duration {plan.duration}")
        spline = CubicHermiteSpline(plan.times, plan.configs, plan.rates, axis=0)
        t = dt * np.arange(steps + 1)
        configs = np.array([expand_axes(c, plan.axes) for c in spline(t)])
        rates = np.array([expand_axes(r, plan.axes) for r in spline.derivative()(t)])
        states = np.array([state_from_config(c, r) for c, r in zip(configs, rates)])
        poses = np.array([np.concatenate(pose_from_config(c)) for c in configs])
        inputs = inverse_dynamics(model, poses, dt)
        return cls(dt=dt, configs=configs, states=states, inputs=inputs, axes=plan.axes)

    @classmethod
    def hold(cls, state, inputs, steps, dt, axes):
        """Constant reference (station keeping)."""
        state = np.asarray(state, dtype=float)
        return cls(
            dt=dt,
            configs=np.tile(config_from_state(state), (steps + 1, 1)),
            states=np.tile(state, (steps + 1, 1)),
            inputs=np.tile(np.asarray(inputs, dtype=float), (steps + 1, 1)),
            axes=tuple(axes),
        )


# --- Linearization and QP ---

def linearize(model, x, u, d, x_next, dt, axes):
    """Error dynamics e' = A e + B du + c of one RK4 step around (x, u).

    c is the error of the nominal step with respect to x_next.
    """
    base = rk4_step(model, x, u, d, dt)
    c = state_error(base, x_next)
    A = np.empty((ERROR_DIM, ERROR_DIM))
    for j in range(ERROR_DIM):
        e = np.zeros(ERROR_DIM)
        e[j] = LINEARIZATION_STEP
        hi = rk4_step(model, retract(x, e), u, d, dt)
        lo = rk4_step(model, retract(x, -e), u, d, dt)
        A[:, j] = (state_error(hi, base) - state_error(lo, base)) / (2.0 * LINEARIZATION_STEP)
    B = np.empty((ERROR_DIM, len(axes)))
    for j, axis in enumerate(axes):
        du = np.zeros(6)
        du[axis] = LINEARIZATION_STEP
        hi = rk4_step(model, x, u + du, d, dt)
        lo = rk4_step(model, x, u - du, d, dt)
        B[:, j] = (state_error(hi, base) - state_error(lo, base)) / (2.0 * LINEARIZATION_STEP)
    return A, B, c


def _condense(linearizations, e0):
    """Stacked predictions z_k = Gamma_k U + w_k for k = 0..N."""
    m = linearizations[0][1].shape[1]
    N = len(linearizations)
    Phi = np.eye(ERROR_DIM)
    Gamma = np.zeros((ERROR_DIM, N * m))
    s = np.zeros(ERROR_DIM)
    gammas, offsets = [Gamma.copy()], [e0.copy()]
    for k, (A, B, c) in enumerate(linearizations):
        Phi = A @ Phi
        Gamma = A @ Gamma
        Gamma[:, k * m:(k + 1) * m] += B
        s = A @ s + c
        gammas.append(Gamma.copy())
        offsets.append(Phi @ e0 + s)
    return gammas, offsets


def _kkt_residual(G, a, C, b, x, lam):
    stationarity = np.max(np.abs(G @ x - a - C @ lam)) if C.size else np.max(np.abs(G @ x - a))
    slack = C.T @ x - b if C.size else np.zeros(0)
    primal = max(0.0, float(np.max(-slack))) if slack.size else 0.0
    complementarity = float(np.max(np.abs(lam * slack))) if slack.size else 0.0
    scale = max(1.0, float(np.max(np.abs(a))))
    return max(stationarity, primal, complementarity) / scale


def _solve_qp(cfg, gammas, offsets, base_inputs, ref_inputs, constraint_rows, ref_positions):
    """Assemble and solve the condensed QP; returns (du, slack, info)."""
    N, axes = cfg.N, list(cfg.axes)
    m = len(axes)
    n_u = N * m
    G = np.kron(np.eye(N), cfg.R)
    g = np.concatenate([(base_inputs[k] - ref_inputs[k])[axes] for k in range(N)])
    a = -(G @ g)
    for k in range(1, N + 1):
        W = cfg.P if k == N else cfg.Q
        G += gammas[k].T @ W @ gammas[k]
        a -= gammas[k].T @ W @ offsets[k]

    rows_A, rows_b = list(constraint_rows[0]), list(constraint_rows[1])
    n_s = 0
    if cfg.workspace is not None:
        Hw, hw = cfg.workspace.H, cfg.workspace.b
        n_s = N * Hw.shape[0]
    n = n_u + n_s
    G_full = np.zeros((n, n))
    G_full[:n_u, :n_u] = G
    a_full = np.zeros(n)
    a_full[:n_u] = a
    A_in = [np.pad(r, (0, n_s)) for r in rows_A]
    b_in = list(rows_b)
    if n_s:
        G_full[n_u:, n_u:] = SLACK_REGULARIZATION * np.eye(n_s)
        a_full[n_u:] = -cfg.slack_penalty
        rows = Hw.shape[0]
        for k in range(1, N + 1):
            for i in range(rows):
                row = np.zeros(n)
                row[:n_u] = Hw[i] @ gammas[k][0:3]
                row[n_u + (k - 1) * rows + i] = -1.0
                A_in.append(row)
                b_in.append(hw[i] - Hw[i] @ (ref_positions[k] + offsets[k][0:3]))
        for j in range(n_s):
            row = np.zeros(n)
            row[n_u + j] = -1.0
            A_in.append(row)
            b_in.append(0.0)

    G_full = 0.5 * (G_full + G_full.T)
    C = -np.array(A_in).T
    b = -np.array(b_in)
    x, _, _, iterations, lam, _ = quadprog.solve_qp(G_full, a_full, C, b, 0)
    info = {
        "kkt": _kkt_residual(G_full, a_full, C, b, x, lam),
        "active": int(np.sum(lam > 1e-12)),
        "iterations": int(iterations[0]),
    }
    return x[:n_u].reshape(N, m), x[n_u:], info


class MpcController:
    """Receding-horizon tracker over a fixed reference.

    Linearizations along the reference are cached per reference index; the
    disturbance estimate only shifts the feed-forward input because it acts
    through the input channels.
    """

    def __init__(self, cfg, reference, m_sp, m_uw=None):
        if cfg.mode == UNDERWATER_EQUIVALENT and m_uw is None:
            raise GeometryError("underwater-equivalent mode needs the underwater model")
        if abs(cfg.dt - reference.dt) > 1e-12:
            raise GeometryError(f"reference dt {reference.dt} differs from controller dt {cfg.dt}")
        self.cfg = cfg
        self.reference = reference
        self.m_sp = m_sp
        self.m_uw = m_uw
        self._cache = {}
        self.last = None

    def reference_linearization(self, k):
        i, j = self.reference.index(k), self.reference.index(k + 1)
        key = (i, j)
        if key not in self._cache:
            ref = self.reference
            self._cache[key] = linearize(self.m_sp, ref.states[i], ref.inputs[i], None, ref.states[j],
                                         self.cfg.dt, self.cfg.axes)
        return self._cache[key]

    def _window(self, k):
        idx = [self.reference.index(k + j) for j in range(self.cfg.N + 1)]
        return self.reference.states[idx], self.reference.inputs[idx]

    def feedforward(self, states, inputs, d_hat):
        """u_ref = u_plan - F(eta) d_hat on every window node."""
        d = six_vector(d_hat)
        mask = self.m_sp.twist_mask
        out = np.empty_like(inputs)
        for k, (x, u) in enumerate(zip(states, inputs)):
            out[k] = mask * (u - self.m_sp.disturbance_map(x[3:7]) @ d)
        return out, d

    def _input_rows(self, base_states, base_inputs):
        cfg, axes = self.cfg, list(self.cfg.axes)
        m = len(axes)
        rows_A, rows_b = [], []
        for k in range(cfg.N):
            if cfg.mode == SPACE:
                H, b = cfg.input_set.H, cfg.input_set.b
                J = np.eye(m)
                offset = base_inputs[k][axes]
            else:
                x = base_states[k]
                H, b = cfg.uw_input_set.H, cfg.uw_input_set.b
                offset = feedback_equivalence_input(x, base_inputs[k], self.m_sp, self.m_uw)[axes]
                J = (np.linalg.pinv(input_matrix(self.m_uw, x)) @ input_matrix(self.m_sp, x))[np.ix_(axes, axes)]
            for h, bi in zip(H, b):
                row = np.zeros(cfg.N * m)
                row[k * m:(k + 1) * m] = h @ J
                rows_A.append(row)
                rows_b.append(bi - h @ offset)
        return rows_A, rows_b

    def _rollout(self, x0, inputs, d):
        states = [x0]
        for u in inputs:
            states.append(rk4_step(self.m_sp, states[-1], u, d, self.cfg.dt))
        return np.array(states)

    def step(self, k, x_hat, d_hat=None):
        cfg, axes = self.cfg, list(self.cfg.axes)
        x_hat = state_vector(x_hat)
        ref_states, plan_inputs = self._window(k)
        ref_inputs, d = self.feedforward(ref_states, plan_inputs, d_hat)

        # First pass: reference linearization, decision = u - u_ref.
        base_states, base_inputs = ref_states, ref_inputs
        linearizations = [self.reference_linearization(k + j) for j in range(cfg.N)]
        e0 = state_error(x_hat, ref_states[0])
        total_iterations = 0
        du = slack = info = None
        for iteration in range(cfg.sqp_iterations + 1):
            gammas, offsets = _condense(linearizations, e0)
            if iteration:
                offsets = [o + state_error(base_states[j], ref_states[j]) for j, o in enumerate(offsets)]
            try:
                du, slack, info = _solve_qp(
                    cfg, gammas, offsets, base_inputs, ref_inputs,
                    self._input_rows(base_states, base_inputs), ref_states[:, 0:3],
                )
            except ValueError as e:
                logger.warning("[MPC] QP failed at tick %d: %s", k, e)
                return MpcSolution(u0=np.zeros(6), predicted=np.zeros((cfg.N + 1, ERROR_DIM)), cost=float("inf"),
                                   failed=True)
            total_iterations += info["iterations"]
            if iteration == cfg.sqp_iterations:
                break
            # Re-linearize around the rollout of this solution.
            inputs = base_inputs[:cfg.N].copy()
            for j in range(cfg.N):
                inputs[j, axes] += du[j]
            base_states = self._rollout(x_hat, inputs, d)
            base_inputs = np.vstack([inputs, base_inputs[cfg.N:]])
            linearizations = [linearize(self.m_sp, base_states[j], base_inputs[j], d, base_states[j + 1], cfg.dt,
                                        cfg.axes) for j in range(cfg.N)]
            e0 = np.zeros(ERROR_DIM)

        u0 = base_inputs[0].copy()
        u0[axes] += du[0]
        predicted = np.array([gammas[j] @ du.ravel() + offsets[j] for j in range(cfg.N + 1)])
        cost = float(sum(z @ (cfg.P if j == cfg.N else cfg.Q) @ z for j, z in enumerate(predicted) if j))
        for j in range(cfg.N):
            dev = (base_inputs[j] - ref_inputs[j])[axes] + du[j]
            cost += float(dev @ cfg.R @ dev)
        slack_max = float(np.max(slack)) if slack.size else 0.0
        if slack_max > 1e-9:
            logger.warning("[MPC] workspace softened by %.3g at tick %d", slack_max, k)

        u_transformed, scale = None, 1.0
        if cfg.mode == UNDERWATER_EQUIVALENT:
            u_transformed, scale = self.transform(x_hat, u0)
        solution = MpcSolution(
            u0=u0,
            predicted=predicted,
            cost=cost + cfg.slack_penalty * float(np.sum(slack)),
            slack=slack_max,
            active=info["active"],
            kkt_residual=info["kkt"],
            u_transformed=u_transformed,
            scale=scale,
            qp_iterations=total_iterations,
        )
        self.last = solution
        return solution

    def transform(self, x, u0):
        """Exact feedback-equivalence wrench, radially scaled into U_uw if needed."""
        axes = list(self.cfg.axes)
        w = feedback_equivalence_input(x, u0, self.m_sp, self.m_uw) * self.m_uw.twist_mask
        violation = self.cfg.uw_input_set.violation(w[axes])
        if violation <= self.cfg.transform_tol:
            return w, 1.0
        scale = self.cfg.uw_input_set.scale_to_boundary(w[axes])
        logger.warning("[MPC] transformed wrench outside U_uw by %.3g; scaled by %.4f", violation, scale)
        return w * scale, scale


def mpc_step_space(cfg, x_hat, reference, k, d_hat, m_sp, controller=None):
    """One space-mode tick; pass a controller to reuse its linearization cache."""
    controller = controller or MpcController(cfg, reference, m_sp)
    return controller.step(k, x_hat, d_hat)


def mpc_step_underwater(cfg, x_hat, reference, k, d_hat, m_sp, m_uw, controller=None):
    """One underwater-equivalent tick; the applied wrench is `solution.u_transformed`."""
    controller = controller or MpcController(cfg, reference, m_sp, m_uw)
    return controller.step(k, x_hat, d_hat)
