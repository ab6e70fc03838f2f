"""Disturbance-robust STL mission planning as a MILP.

The planner works on the linear free-flyer model: each active configuration
axis is a zero-order-hold double integrator driven by inertial force or
Euler torque. It maximizes the robustness degree alpha (how much of the
disturbance box the tightened inputs can still absorb) together with the
spatial robustness rho of the specification, and a small fuel term.

STL is encoded with the big-M lower-bound scheme on the negation normal
form: every subformula at every anchor gets a variable that can only be
smaller than its true robustness, so a feasible point always yields a
trajectory at least as robust as the encoded rho.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import milp_solver
import polytope_geom
import stl_core
from dynamics import CONFIG_DIMS, planner_matrices
from errors import GeometryError, InfeasibleError, SpecError, ValidationError
from milp_solver import EQ, GE, LE, MilpProblem

logger = logging.getLogger(__name__)

BIG_M_MARGIN = 0.1
BIG_M_FLOOR = 1e-3
AUDIT_TOL = 1e-6

INPUT_NAMES = ("Fx", "Fy", "Fz", "tau_x", "tau_y", "tau_z")

# negation normal form only
_FALSE = "false"
_RELEASE = "release"


# --- Plan ---

@dataclass(frozen=True, eq=False)
class Plan:
    """Time-stamped configuration / rate / input trajectory of one platform.

    configs and rates have one row per grid time; inputs have one row per
    step (N rows) for planner output or one per grid time for re-timed
    plans whose wrenches come from inverse dynamics.
    """

    dt: float
    configs: np.ndarray
    rates: np.ndarray
    inputs: np.ndarray
    alpha: float
    rho: float
    fuel: float
    axes: tuple
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("configs", "rates", "inputs"):
            value = np.array(getattr(self, name), dtype=float)
            if value.ndim == 1:
                value = value.reshape(-1, 1)
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "axes", tuple(int(a) for a in self.axes))
        if self.configs.shape != self.rates.shape:
            raise ValidationError("plan configs and rates differ in shape")

    @property
    def n_steps(self):
        return self.configs.shape[0] - 1

    @property
    def times(self):
        return self.dt * np.arange(self.configs.shape[0])

    @property
    def duration(self):
        return self.dt * self.n_steps

    @property
    def dims(self):
        return tuple(CONFIG_DIMS[a] for a in self.axes)

    def signal(self):
        return stl_core.Signal(self.times, self.configs, self.dims)

    def states(self):
        return np.hstack([self.configs, self.rates])

    def to_frame(self):
        frame = pd.DataFrame({"t": self.times})
        for i, dim in enumerate(self.dims):
            frame[dim] = self.configs[:, i]
        for i, dim in enumerate(self.dims):
            frame[f"d_{dim}"] = self.rates[:, i]
        padded = np.full((len(frame), self.inputs.shape[1]), np.nan)
        padded[: self.inputs.shape[0]] = self.inputs
        for i, axis in enumerate(self.axes):
            frame[INPUT_NAMES[axis]] = padded[:, i]
        return frame

    def to_dict(self):
        return {
            "dt": self.dt,
            "axes": list(self.axes),
            "configs": self.configs.tolist(),
            "rates": self.rates.tolist(),
            "inputs": self.inputs.tolist(),
            "alpha": self.alpha,
            "rho": None if math.isinf(self.rho) else self.rho,
            "fuel": self.fuel,
            "solver": dict(self.solver),
        }

    @classmethod
    def from_dict(cls, data):
        rho = data.get("rho")
        return cls(
            dt=float(data["dt"]),
            configs=np.asarray(data["configs"], dtype=float),
            rates=np.asarray(data["rates"], dtype=float),
            inputs=np.asarray(data["inputs"], dtype=float),
            alpha=float(data["alpha"]),
            rho=math.inf if rho is None else float(rho),
            fuel=float(data.get("fuel", 0.0)),
            axes=tuple(data["axes"]),
            solver=dict(data.get("solver", {})),
        )


@dataclass(frozen=True, eq=False)
class PlanningTask:
    """Everything `plan` needs; the harness builds one from a scenario."""

    spec: stl_core.Formula
    model: object
    U: polytope_geom.Polytope
    K: np.ndarray
    d_bar: np.ndarray
    dt: float
    N: int
    x0: np.ndarray
    workspace_lower: np.ndarray
    workspace_upper: np.ndarray
    axes: tuple
    c1: float = 1e3
    c2: float = 1e-3
    terminal_lower: np.ndarray | None = None
    terminal_upper: np.ndarray | None = None
    rest_at_end: bool = False
    rho_cap: float | None = None
    alpha_cap: float | None = None
    alpha_min: float = 0.0
    name: str = "mission"

    @property
    def dims(self):
        return tuple(CONFIG_DIMS[a] for a in self.axes)


# --- Negation normal form ---

@dataclass(eq=False)
class _Node:
    kind: str
    children: tuple = ()
    window: tuple | None = None
    predicate: stl_core.Predicate | None = None


_TRUE_NODE = _Node(stl_core.TRUE)
_FALSE_NODE = _Node(_FALSE)


def _combine(kind, children):
    unit, absorbing = (stl_core.TRUE, _FALSE) if kind == stl_core.AND else (_FALSE, stl_core.TRUE)
    flat = []
    for child in children:
        if child.kind == absorbing:
            return child
        if child.kind == unit:
            continue
        flat.extend(child.children if child.kind == kind else (child,))
    if not flat:
        return _TRUE_NODE if unit == stl_core.TRUE else _FALSE_NODE
    return flat[0] if len(flat) == 1 else _Node(kind, tuple(flat))


def _temporal(kind, window, child):
    if child.kind in (stl_core.TRUE, _FALSE):
        return child
    return _Node(kind, (child,), window)


def _until(left, right, window):
    lo, _ = window
    if right.kind == _FALSE or left.kind == _FALSE:
        return _FALSE_NODE
    if left.kind == stl_core.TRUE:
        return _temporal(stl_core.EVENTUALLY, window, right)
    if right.kind == stl_core.TRUE:
        return _temporal(stl_core.ALWAYS, (0, lo), left)
    return _Node(stl_core.UNTIL, (left, right), window)


def _release(left, right, window):
    lo, _ = window
    if left.kind == stl_core.TRUE or right.kind == stl_core.TRUE:
        return _TRUE_NODE
    if left.kind == _FALSE:
        return _temporal(stl_core.ALWAYS, window, right)
    if right.kind == _FALSE:
        return _temporal(stl_core.EVENTUALLY, (0, lo), left)
    return _Node(_RELEASE, (left, right), window)


def _window(f, dt):
    lo, hi = stl_core.window_indices(f.interval, dt, f.kind)
    if lo > hi and f.kind != stl_core.ALWAYS:
        raise SpecError(f"{f.kind} interval {list(f.interval)} rounds to an empty window at dt = {dt}")
    return lo, hi


def to_nnf(f, dt, negate=False):
    """Push negations to the predicates; windows become sample-index pairs.

    Windows keep the rounding of the operator as written, so a negated
    Eventually turns into an Always over the Eventually's (inward) window.
    """
    kind = f.kind
    if kind == stl_core.TRUE:
        return _FALSE_NODE if negate else _TRUE_NODE
    if kind == stl_core.PRED:
        return _Node(stl_core.PRED, predicate=f.predicate.negated() if negate else f.predicate)
    if kind == stl_core.NOT:
        return to_nnf(f.children[0], dt, not negate)
    if kind in (stl_core.AND, stl_core.OR):
        children = [to_nnf(c, dt, negate) for c in f.children]
        flipped = {stl_core.AND: stl_core.OR, stl_core.OR: stl_core.AND}[kind] if negate else kind
        return _combine(flipped, children)
    window = _window(f, dt)
    if kind == stl_core.ALWAYS and window[0] > window[1]:
        return _FALSE_NODE if negate else _TRUE_NODE
    if kind == stl_core.EVENTUALLY:
        child = to_nnf(f.children[0], dt, negate)
        return _temporal(stl_core.ALWAYS if negate else stl_core.EVENTUALLY, window, child)
    if kind == stl_core.ALWAYS:
        child = to_nnf(f.children[0], dt, negate)
        return _temporal(stl_core.EVENTUALLY if negate else stl_core.ALWAYS, window, child)
    left = to_nnf(f.children[0], dt, negate)
    right = to_nnf(f.children[1], dt, negate)
    return _release(left, right, window) if negate else _until(left, right, window)


def nnf_horizon(node):
    if node.kind in (stl_core.TRUE, _FALSE, stl_core.PRED):
        return 0
    below = max(nnf_horizon(c) for c in node.children)
    if node.kind in (stl_core.AND, stl_core.OR):
        return below
    return node.window[1] + below


# --- STL encoding ---

@dataclass(frozen=True)
class _Expr:
    """Affine expression sum(coeffs[i] * x_i) + const with known range [lo, hi]."""

    coeffs: dict
    const: float
    lo: float
    hi: float


class _StlEncoder:
    def __init__(self, problem, eta, lower, upper):
        self.p = problem
        self.eta = eta
        self.lower = lower
        self.upper = upper
        self.cache = {}
        self.count = 0
        self.binaries = 0

    def _var(self, prefix, lo, hi):
        self.count += 1
        return self.p.add_var(f"{prefix}{self.count}", lo, hi)

    def _le(self, var, e):
        """var <= e"""
        coeffs = {var: 1.0}
        for i, a in e.coeffs.items():
            coeffs[i] = coeffs.get(i, 0.0) - a
        self.p.add_constraint(coeffs, LE, e.const)

    def min_of(self, exprs):
        if len(exprs) == 1:
            return exprs[0]
        lo = min(e.lo for e in exprs)
        hi = min(e.hi for e in exprs)
        r = self._var("r", lo, hi)
        for e in exprs:
            self._le(r, e)
        return _Expr({r: 1.0}, 0.0, lo, hi)

    def max_of(self, exprs):
        if len(exprs) == 1:
            return exprs[0]
        lo = max(e.lo for e in exprs)
        hi = max(e.hi for e in exprs)
        r = self._var("r", lo, hi)
        selectors = {}
        for e in exprs:
            self.count += 1
            z = self.p.add_binary(f"z{self.count}")
            self.binaries += 1
            selectors[z] = 1.0
            big_m = (1.0 + BIG_M_MARGIN) * max(hi - e.lo, 0.0) + BIG_M_FLOOR
            # r <= e + M (1 - z)
            coeffs = {r: 1.0, z: big_m}
            for i, a in e.coeffs.items():
                coeffs[i] = coeffs.get(i, 0.0) - a
            self.p.add_constraint(coeffs, LE, e.const + big_m)
        self.p.add_constraint(selectors, EQ, 1.0)
        return _Expr({r: 1.0}, 0.0, lo, hi)

    def predicate(self, pred, k):
        a = np.asarray(pred.a)
        lo = pred.c + float(np.sum(np.minimum(a * self.lower, a * self.upper)))
        hi = pred.c + float(np.sum(np.maximum(a * self.lower, a * self.upper)))
        coeffs = {int(self.eta[k, i]): float(v) for i, v in enumerate(a) if v != 0.0}
        return _Expr(coeffs, pred.c, lo, hi)

    def encode(self, node, k):
        key = (id(node), k)
        if key not in self.cache:
            self.cache[key] = self._encode(node, k)
        return self.cache[key]

    def _encode(self, node, k):
        kind = node.kind
        if kind == stl_core.PRED:
            return self.predicate(node.predicate, k)
        if kind == stl_core.AND:
            return self.min_of([self.encode(c, k) for c in node.children])
        if kind == stl_core.OR:
            return self.max_of([self.encode(c, k) for c in node.children])
        lo, hi = node.window
        if kind == stl_core.ALWAYS:
            return self.min_of([self.encode(node.children[0], k + j) for j in range(lo, hi + 1)])
        if kind == stl_core.EVENTUALLY:
            return self.max_of([self.encode(node.children[0], k + j) for j in range(lo, hi + 1)])
        left, right = node.children
        if kind == stl_core.UNTIL:
            prefix = [self.encode(left, k)]
            for j in range(1, hi + 1):
                prefix.append(self.min_of([prefix[-1], self.encode(left, k + j)]))
            terms = [self.min_of([self.encode(right, k + j), prefix[j]]) for j in range(lo, hi + 1)]
            return self.max_of(terms)
        # release: min over the window of max(right, running max of left)
        prefix = [self.encode(left, k)]
        for j in range(1, hi + 1):
            prefix.append(self.max_of([prefix[-1], self.encode(left, k + j)]))
        terms = [self.max_of([self.encode(right, k + j), prefix[j]]) for j in range(lo, hi + 1)]
        return self.min_of(terms)


# --- Encode / decode ---

def _bounds_vector(values, n, default):
    if values is None:
        return np.full(n, default)
    out = np.asarray(values, dtype=float).ravel()
    if out.size != n:
        raise SpecError(f"expected {n} bound values, got {out.size}")
    return np.where(np.isnan(out), default, out)


def encode(spec, model, U, K, d_bar, c1, c2, dt, N, x0, terminal=None, *, workspace, axes,
           rest_at_end=False, rho_cap=None, alpha_cap=None, alpha_min=0.0, name="mission"):
    """Build the robust planning MILP.

    :param x0: initial planner state [eta_0, eta_dot_0] over `axes`
    :param terminal: optional (lower, upper) box on eta_N; NaN entries are free
    :param workspace: (lower, upper) finite box on every planned configuration
    :param axes: configuration indices (0..5 for x y z roll pitch yaw) being planned
    """
    axes = tuple(axes)
    n = len(axes)
    if N < 1:
        raise SpecError(f"planning grid needs at least one step, got N = {N}")
    lower = np.asarray(workspace[0], dtype=float).ravel()
    upper = np.asarray(workspace[1], dtype=float).ravel()
    if lower.size != n or upper.size != n or not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise SpecError("workspace must give finite lower/upper bounds for every planned axis")
    if np.any(lower > upper):
        raise SpecError("workspace lower bound exceeds upper bound")
    if U.dim != n:
        raise GeometryError(f"input set has dimension {U.dim}, planner has {n} axes")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    d_bar = np.asarray(d_bar, dtype=float).ravel()
    if not polytope_geom.can_cancel_disturbance(U, K, d_bar):
        raise GeometryError("input set cannot cancel the worst-case disturbance (-U must contain K D)")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != 2 * n:
        raise SpecError(f"initial state must have {2 * n} entries, got {x0.size}")
    if np.any(x0[:n] < lower - 1e-9) or np.any(x0[:n] > upper + 1e-9):
        raise InfeasibleError("initial configuration lies outside the workspace")

    root = to_nnf(spec, dt)
    if root.kind == _FALSE:
        raise InfeasibleError("specification is unsatisfiable on the planning grid")
    need = nnf_horizon(root)
    if need > N:
        raise SpecError(f"specification horizon needs {need} steps, the planning grid has {N}")

    t_row = polytope_geom.tightening_coefficients(U, K, d_bar)
    alpha_ub = polytope_geom.alpha_max_for_zero_input(U, K, d_bar)
    if alpha_cap is not None:
        alpha_ub = min(alpha_ub, float(alpha_cap))
    if not math.isfinite(alpha_ub):
        raise GeometryError("zero disturbance bound leaves the robustness degree unbounded")
    if alpha_min > alpha_ub:
        raise InfeasibleError(f"required robustness degree {alpha_min} exceeds the attainable {alpha_ub:.6g}")

    A, B = planner_matrices(model, dt, axes)
    dims = tuple(CONFIG_DIMS[a] for a in axes)
    p = MilpProblem(name)

    term_lo = _bounds_vector(terminal[0] if terminal else None, n, -math.inf)
    term_hi = _bounds_vector(terminal[1] if terminal else None, n, math.inf)
    eta = np.empty((N + 1, n), dtype=int)
    rate = np.empty((N + 1, n), dtype=int)
    for k in range(N + 1):
        for i, dim in enumerate(dims):
            lo, hi = lower[i], upper[i]
            if k == N:
                lo, hi = max(lo, term_lo[i]), min(hi, term_hi[i])
                if lo > hi:
                    raise InfeasibleError(f"terminal region misses the workspace along '{dim}'")
            if k == 0:
                lo = hi = x0[i]
            eta[k, i] = p.add_var(f"eta_{dim}_{k}", lo, hi)
        for i, dim in enumerate(dims):
            if k == 0:
                lo = hi = x0[n + i]
            elif k == N and rest_at_end:
                lo = hi = 0.0
            else:
                lo, hi = -math.inf, math.inf
            rate[k, i] = p.add_var(f"rate_{dim}_{k}", lo, hi)
    u = np.array([[p.add_var(f"u_{INPUT_NAMES[a]}_{k}", -math.inf, math.inf) for a in axes] for k in range(N)],
                 dtype=int).reshape(N, n)
    s = np.array([[p.add_var(f"s_{INPUT_NAMES[a]}_{k}", 0.0, math.inf) for a in axes] for k in range(N)],
                 dtype=int).reshape(N, n)
    alpha = p.add_var("alpha", alpha_min, alpha_ub)

    state = np.hstack([eta, rate])
    for k in range(N):
        for row in range(2 * n):
            coeffs = {int(state[k + 1, row]): 1.0}
            for col in range(2 * n):
                if A[row, col]:
                    coeffs[int(state[k, col])] = coeffs.get(int(state[k, col]), 0.0) - A[row, col]
            for col in range(n):
                if B[row, col]:
                    coeffs[int(u[k, col])] = -B[row, col]
            p.add_constraint(coeffs, EQ, 0.0, f"dyn_{k}_{row}")
        for h, b, t in zip(U.H, U.b, t_row):
            coeffs = {int(u[k, col]): h[col] for col in range(n) if h[col]}
            if t:
                coeffs[alpha] = t
            p.add_constraint(coeffs, LE, b)
        for col in range(n):
            p.add_constraint({int(s[k, col]): 1.0, int(u[k, col]): -1.0}, GE, 0.0)
            p.add_constraint({int(s[k, col]): 1.0, int(u[k, col]): 1.0}, GE, 0.0)

    root_true = root.kind == stl_core.TRUE
    encoder = _StlEncoder(p, eta, lower, upper)
    if root_true:
        rho = p.add_var("rho", 0.0, 0.0)
    else:
        top = encoder.encode(root, 0)
        rho_hi = top.hi if rho_cap is None else min(top.hi, float(rho_cap))
        if rho_hi < 0.0:
            raise InfeasibleError("specification cannot be satisfied inside the workspace")
        rho = p.add_var("rho", 0.0, rho_hi)
        encoder._le(rho, top)

    objective = {alpha: -1.0, rho: -float(c1)}
    for idx in s.ravel():
        objective[int(idx)] = float(c2)
    p.set_objective(objective)
    p.meta = {
        "eta": eta, "rate": rate, "u": u, "s": s, "alpha": alpha, "rho": rho,
        "root_true": root_true, "dt": dt, "N": N, "axes": axes, "t_row": t_row,
    }
    logger.info("[Planner] encoded %s: %d vars (%d binaries), %d rows, horizon %d/%d steps, alpha <= %.6g",
                name, p.n_vars, encoder.binaries, len(p.constraints), need, N, alpha_ub)
    return p


def decode(problem, solution):
    meta = problem.meta
    x = solution.x
    configs = x[meta["eta"]]
    rates = x[meta["rate"]]
    inputs = x[meta["u"]]
    rho = math.inf if meta["root_true"] else float(x[meta["rho"]])
    return Plan(
        dt=meta["dt"],
        configs=configs,
        rates=rates,
        inputs=inputs,
        alpha=float(x[meta["alpha"]]),
        rho=rho,
        fuel=float(np.abs(inputs).sum()),
        axes=meta["axes"],
        solver={
            "backend": solution.backend,
            "status": solution.status,
            "objective": solution.objective,
            "bound": solution.bound,
            "nodes": solution.nodes,
        },
    )


def audit_plan(plan, task, tol=AUDIT_TOL):
    """Independent post-solve checks; returns the residuals found.

    :raises ValidationError: dynamics, input or robustness check fails
    """
    A, B = planner_matrices(task.model, plan.dt, plan.axes)
    states = plan.states()
    steps = min(plan.n_steps, plan.inputs.shape[0])
    residual = 0.0
    for k in range(steps):
        predicted = A @ states[k] + B @ plan.inputs[k]
        residual = max(residual, float(np.max(np.abs(states[k + 1] - predicted))))
    tightened = polytope_geom.tighten(task.U, task.K, task.d_bar, plan.alpha)
    input_violation = max((tightened.violation(u) for u in plan.inputs[:steps]), default=-math.inf)
    rho_monitor = stl_core.robustness(task.spec, plan.signal(), 0.0)
    report = {
        "dynamics_residual": residual,
        "input_violation": input_violation,
        "rho_monitor": rho_monitor,
        "rho_encoded": plan.rho,
    }
    problems = []
    if residual > tol:
        problems.append(f"dynamics residual {residual:.3g}")
    if input_violation > tol:
        problems.append(f"tightened-input violation {input_violation:.3g}")
    if rho_monitor < -tol or (math.isfinite(plan.rho) and rho_monitor < plan.rho - tol):
        problems.append(f"monitor robustness {rho_monitor:.6g} below encoded {plan.rho:.6g}")
    if problems:
        raise ValidationError("plan failed its post-solve audit: " + "; ".join(problems), details=report)
    return report


def encode_task(task):
    terminal = None
    if task.terminal_lower is not None or task.terminal_upper is not None:
        terminal = (task.terminal_lower, task.terminal_upper)
    return encode(
        task.spec, task.model, task.U, task.K, task.d_bar, task.c1, task.c2, task.dt, task.N, task.x0,
        terminal, workspace=(task.workspace_lower, task.workspace_upper), axes=task.axes,
        rest_at_end=task.rest_at_end, rho_cap=task.rho_cap, alpha_cap=task.alpha_cap,
        alpha_min=task.alpha_min, name=task.name,
    )


def plan(task, solver="bnb", gap=None, time_budget=None, node_limit=None):
    """Encode, solve, decode and audit one planning task."""
    problem = encode_task(task)
    solution = milp_solver.solve(problem, gap=gap, time_budget=time_budget, solver=solver, node_limit=node_limit)
    result = decode(problem, solution)
    audit = audit_plan(result, task)
    logger.info("[Planner] %s: alpha*=%.6g rho*=%.6g fuel=%.6g (monitor rho %.6g)",
                task.name, result.alpha, result.rho, result.fuel, audit["rho_monitor"])
    return result
