"""Mixed-integer linear programs: a small problem container, an LP-relaxation
branch-and-bound solver and a CPLEX-LP text exporter.

Relaxations are solved with scipy's HiGHS dual simplex. linprog takes no
starting basis, so every node is a cold solve; only the constraint rows are
built once per problem. Node selection is best-bound with a depth-first
dive until the first incumbent; branching picks the most fractional binary,
lowest index on ties.
"""

from __future__ import annotations

import heapq
import logging
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

import config
from errors import InfeasibleError, SolverError

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"
LE, GE, EQ = "<=", ">=", "="

INTEGRALITY_TOL = 1e-6
PROGRESS_EVERY = 50

OPTIMAL = "optimal"
TIME_LIMIT = "time_limit"
NODE_LIMIT = "node_limit"


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    kind: str = CONTINUOUS


@dataclass(frozen=True)
class Constraint:
    coeffs: dict
    sense: str
    rhs: float
    name: str = ""


class MilpProblem:
    """Minimize c.x subject to linear rows and variable bounds."""

    def __init__(self, name="mission"):
        self.name = name
        self.variables = []
        self.index = {}
        self.objective = {}
        self.constraints = []
        # free-form links from model quantities to variable indices
        self.meta = {}

    def __repr__(self):
        return (f"MilpProblem({self.name!r}, vars={self.n_vars}, binaries={len(self.binaries)}, "
                f"rows={len(self.constraints)})")

    @property
    def n_vars(self):
        return len(self.variables)

    @property
    def binaries(self):
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]

    def add_var(self, name, lb=0.0, ub=math.inf, kind=CONTINUOUS):
        if name in self.index:
            raise SolverError(f"variable '{name}' declared twice")
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        if lb > ub:
            raise SolverError(f"variable '{name}' has lb {lb} > ub {ub}")
        self.index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), kind))
        return self.index[name]

    def add_binary(self, name):
        return self.add_var(name, kind=BINARY)

    def add_constraint(self, coeffs, sense, rhs, name=""):
        if sense not in (LE, GE, EQ):
            raise SolverError(f"unknown constraint sense '{sense}'")
        clean = {}
        for i, a in coeffs.items():
            if not 0 <= i < self.n_vars:
                raise SolverError(f"constraint '{name}' references undeclared variable {i}")
            if a != 0.0:
                clean[i] = clean.get(i, 0.0) + float(a)
        self.constraints.append(Constraint(clean, sense, float(rhs), name or f"c{len(self.constraints)}"))
        return len(self.constraints) - 1

    def set_objective(self, coeffs):
        self.objective = {i: float(a) for i, a in coeffs.items() if a != 0.0}

    def add_objective(self, i, coef):
        self.objective[i] = self.objective.get(i, 0.0) + float(coef)

    def bounds(self):
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def cost_vector(self):
        c = np.zeros(self.n_vars)
        for i, a in self.objective.items():
            c[i] = a
        return c

    def row_matrices(self):
        """(A_ub, b_ub, A_eq, b_eq) as CSR matrices; >= rows are negated."""
        ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
        eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
        for con in self.constraints:
            if con.sense == EQ:
                r = len(b_eq)
                for i, a in con.coeffs.items():
                    eq_rows.append(r)
                    eq_cols.append(i)
                    eq_vals.append(a)
                b_eq.append(con.rhs)
            else:
                sign = 1.0 if con.sense == LE else -1.0
                r = len(b_ub)
                for i, a in con.coeffs.items():
                    ub_rows.append(r)
                    ub_cols.append(i)
                    ub_vals.append(sign * a)
                b_ub.append(sign * con.rhs)
        n = self.n_vars
        A_ub = sparse.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), n)) if b_ub else None
        A_eq = sparse.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), n)) if b_eq else None
        return A_ub, (np.array(b_ub) if b_ub else None), A_eq, (np.array(b_eq) if b_eq else None)


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray
    objective: float
    bound: float
    nodes: int = 0
    backend: str = "bnb"
    stats: dict = field(default_factory=dict)

    @property
    def gap(self):
        if not math.isfinite(self.bound):
            return math.inf
        return abs(self.objective - self.bound) / max(1.0, abs(self.objective))

    def value(self, problem, name):
        return float(self.x[problem.index[name]])


# --- Branch and bound ---

class _Relaxation:
    """LP relaxation with fixed rows; only variable bounds change per node.

    Each call is an independent linprog solve (no basis carried over).
    """

    def __init__(self, problem):
        self.c = problem.cost_vector()
        self.A_ub, self.b_ub, self.A_eq, self.b_eq = problem.row_matrices()
        self.solves = 0

    def solve(self, lb, ub):
        self.solves += 1
        res = linprog(
            self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
            bounds=np.column_stack([lb, ub]), method="highs-ds",
        )
        if res.status == 0:
            return "optimal", res.x, float(res.fun)
        if res.status == 2:
            return "infeasible", None, math.inf
        if res.status == 3:
            return "unbounded", None, -math.inf
        raise SolverError(f"LP relaxation failed: {res.message}")


def _most_fractional(x, binaries):
    if not binaries:
        return None
    values = x[binaries]
    frac = np.abs(values - np.round(values))
    j = int(np.argmax(frac))
    if frac[j] <= INTEGRALITY_TOL:
        return None
    return binaries[j]


def _converged(incumbent, bound, gap):
    if not math.isfinite(incumbent):
        return False
    return incumbent - bound <= gap * max(1.0, abs(incumbent))


def _solve_bnb(problem, gap, time_budget, node_limit=None):
    started = time.monotonic()
    relax = _Relaxation(problem)
    binaries = problem.binaries
    lb0, ub0 = problem.bounds()

    status, x, obj = relax.solve(lb0, ub0)
    if status == "infeasible":
        raise InfeasibleError(f"problem '{problem.name}' is infeasible (root relaxation)")
    if status == "unbounded":
        raise SolverError(f"problem '{problem.name}' is unbounded")

    incumbent, best_x = math.inf, None
    counter = 0
    heap = [(obj, counter, lb0, ub0, x)]
    dive = None
    nodes = 0
    stopped = None

    while True:
        if dive is not None:
            node, dive, from_heap = dive, None, False
        elif heap:
            node, from_heap = heapq.heappop(heap), True
        else:
            break
        bound, _, lb, ub, x = node
        if _converged(incumbent, bound, gap):
            if from_heap:
                # every open node has a bound at least this large
                heapq.heappush(heap, node)
                break
            continue
        nodes += 1
        if nodes % PROGRESS_EVERY == 0:
            logger.debug("[BnB] node %d open=%d incumbent=%.9g bound=%.9g", nodes, len(heap), incumbent, bound)
        if time.monotonic() - started > time_budget:
            stopped = TIME_LIMIT
        elif node_limit is not None and nodes > node_limit:
            stopped = NODE_LIMIT
        if stopped:
            heapq.heappush(heap, node)
            nodes -= 1
            break

        j = _most_fractional(x, binaries)
        if j is None:
            if bound < incumbent:
                incumbent = bound
                best_x = x.copy()
                best_x[binaries] = np.round(best_x[binaries])
                logger.debug("[BnB] new incumbent %.9g at node %d", incumbent, nodes)
            continue

        children = []
        for fix in (0.0, 1.0):
            lb_c, ub_c = lb.copy(), ub.copy()
            lb_c[j] = ub_c[j] = fix
            child_status, child_x, child_obj = relax.solve(lb_c, ub_c)
            if child_status != "optimal" or _converged(incumbent, child_obj, gap):
                continue
            counter += 1
            children.append((child_obj, counter, lb_c, ub_c, child_x))
        if not children:
            continue
        children.sort(key=lambda item: (item[0], item[1]))
        if best_x is None:
            dive = children[0]
            children = children[1:]
        for child in children:
            heapq.heappush(heap, child)

    if best_x is None:
        if stopped:
            raise SolverError(f"{stopped.replace('_', ' ')} reached before any integer solution")
        raise InfeasibleError(f"problem '{problem.name}' has no integer-feasible point")

    bound = min([incumbent] + [item[0] for item in heap])
    status = stopped or OPTIMAL
    elapsed = time.monotonic() - started
    logger.info("[BnB] %s: status=%s objective=%.9g bound=%.9g nodes=%d lps=%d %.2fs",
                problem.name, status, incumbent, bound, nodes, relax.solves, elapsed)
    return MilpSolution(status, best_x, incumbent, bound, nodes, "bnb",
                        {"lp_solves": relax.solves, "seconds": elapsed})


# --- HiGHS backend ---

def _solve_highs(problem, gap, time_budget, node_limit=None):
    c = problem.cost_vector()
    lb, ub = problem.bounds()
    A_ub, b_ub, A_eq, b_eq = problem.row_matrices()
    constraints = []
    if A_ub is not None:
        constraints.append(LinearConstraint(A_ub, -np.inf, b_ub))
    if A_eq is not None:
        constraints.append(LinearConstraint(A_eq, b_eq, b_eq))
    integrality = np.array([1 if v.kind == BINARY else 0 for v in problem.variables])
    options = {"mip_rel_gap": gap, "time_limit": time_budget}
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    started = time.monotonic()
    res = milp(c, integrality=integrality, bounds=Bounds(lb, ub), constraints=constraints, options=options)
    elapsed = time.monotonic() - started
    if res.status == 2:
        raise InfeasibleError(f"problem '{problem.name}' is infeasible")
    if res.status == 3:
        raise SolverError(f"problem '{problem.name}' is unbounded")
    if res.x is None:
        raise SolverError(f"HiGHS returned no solution: {res.message}")
    x = np.asarray(res.x, dtype=float)
    binaries = problem.binaries
    x[binaries] = np.round(x[binaries])
    bound = getattr(res, "mip_dual_bound", None)
    bound = float(res.fun if bound is None else bound)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    status = OPTIMAL if res.status == 0 else TIME_LIMIT
    logger.info("[HiGHS] %s: status=%s objective=%.9g bound=%.9g nodes=%d %.2fs",
                problem.name, status, res.fun, bound, nodes, elapsed)
    return MilpSolution(status, x, float(res.fun), bound, nodes, "highs", {"seconds": elapsed})


def solve(problem, gap=None, time_budget=None, solver="bnb", node_limit=None):
    """Solve to relative `gap`; returns the incumbent and the proven bound.

    node_limit stops the search after a fixed number of nodes, which unlike
    the time budget gives the same incumbent on every run.

    :raises InfeasibleError: no feasible point exists
    :raises SolverError: unbounded problem or no incumbent within the time or node budget
    """
    gap = config.MILP_GAP if gap is None else gap
    time_budget = config.MILP_TIME_BUDGET if time_budget is None else time_budget
    if problem.n_vars == 0:
        return MilpSolution(OPTIMAL, np.zeros(0), 0.0, 0.0, 0, solver)
    if solver == "bnb":
        return _solve_bnb(problem, gap, time_budget, node_limit)
    if solver == "highs":
        return _solve_highs(problem, gap, time_budget, node_limit)
    raise SolverError(f"unknown MILP solver '{solver}'")


# --- LP file export ---

_LP_NAME_RE = re.compile(r"[^A-Za-z0-9_.]")


def _lp_name(name):
    clean = _LP_NAME_RE.sub("_", name)
    return clean if clean and not clean[0].isdigit() and clean[0] != "." else f"v_{clean}"


def _lp_names(raw):
    """Sanitized names, suffixed _2, _3, ... where sanitizing collides."""
    names, used = [], set()
    for name in raw:
        clean = candidate = _lp_name(name)
        k = 2
        while candidate in used:
            candidate = f"{clean}_{k}"
            k += 1
        used.add(candidate)
        names.append(candidate)
    return names


def _lp_number(value):
    return f"{value:.17g}"


def _lp_terms(coeffs, names):
    parts = []
    for i in sorted(coeffs):
        a = coeffs[i]
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_lp_number(abs(a))} {names[i]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp(problem):
    """CPLEX LP text: Minimize, Subject To, Bounds, Binaries, End."""
    names = _lp_names(v.name for v in problem.variables)
    row_names = _lp_names(con.name for con in problem.constraints)
    lines = [f"\\ Problem: {problem.name}", "Minimize"]
    if problem.objective:
        lines.append(f" obj: {_lp_terms(problem.objective, names)}")
    else:
        lines.append(" obj:")
    lines.append("Subject To")
    for con, row_name in zip(problem.constraints, row_names):
        lhs = _lp_terms(con.coeffs, names) if con.coeffs else f"0 {names[0]}" if names else "0"
        lines.append(f" {row_name}: {lhs} {con.sense} {_lp_number(con.rhs)}")

    bounds = []
    for v, name in zip(problem.variables, names):
        if v.kind == BINARY:
            continue
        if v.lb == 0.0 and v.ub == math.inf:
            continue
        if v.lb == -math.inf and v.ub == math.inf:
            bounds.append(f" {name} free")
        elif v.lb == v.ub:
            bounds.append(f" {name} = {_lp_number(v.lb)}")
        else:
            lo = "-inf" if v.lb == -math.inf else _lp_number(v.lb)
            hi = "+inf" if v.ub == math.inf else _lp_number(v.ub)
            bounds.append(f" {lo} <= {name} <= {hi}")
    if bounds:
        lines.append("Bounds")
        lines.extend(bounds)

    binary_names = [names[i] for i in problem.binaries]
    if binary_names:
        lines.append("Binaries")
        lines.append(" " + " ".join(binary_names))
    lines.append("End")
    return "\n".join(lines) + "\n"
