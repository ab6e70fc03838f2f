import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

import milp_solver
from errors import InfeasibleError, SolverError
from milp_solver import EQ, GE, LE, MilpProblem

N_BINARY = 5
N_CONTINUOUS = 3


def _random_instance(rng):
    """Random bounded MILP with a known feasible point."""
    prob = MilpProblem("random")
    z = [prob.add_binary(f"z{i}") for i in range(N_BINARY)]
    x = [prob.add_var(f"x{i}", -5.0, 5.0) for i in range(N_CONTINUOUS)]
    z0 = rng.integers(0, 2, size=N_BINARY)
    x0 = rng.uniform(-2.0, 2.0, size=N_CONTINUOUS)
    rows = []
    for _ in range(6):
        a = rng.normal(size=N_BINARY + N_CONTINUOUS)
        rhs = float(a @ np.concatenate([z0, x0]) + rng.uniform(0.0, 1.0))
        prob.add_constraint(dict(zip(z + x, a)), LE, rhs)
        rows.append((a, rhs))
    c = rng.normal(size=N_BINARY + N_CONTINUOUS)
    prob.set_objective(dict(zip(z + x, c)))
    return prob, rows, c


def _enumerate(rows, c):
    A = np.array([a for a, _ in rows])
    b = np.array([rhs for _, rhs in rows])
    best = math.inf
    for zs in itertools.product((0.0, 1.0), repeat=N_BINARY):
        zs = np.array(zs)
        res = linprog(c[N_BINARY:], A_ub=A[:, N_BINARY:], b_ub=b - A[:, :N_BINARY] @ zs,
                      bounds=[(-5.0, 5.0)] * N_CONTINUOUS, method="highs")
        if res.status == 0:
            best = min(best, float(c[:N_BINARY] @ zs + res.fun))
    return best


def test_branch_and_bound_matches_enumeration(rng):
    for _ in range(50):
        prob, rows, c = _random_instance(rng)
        solution = milp_solver.solve(prob, gap=0.0, time_budget=60.0)
        assert solution.status == milp_solver.OPTIMAL
        assert solution.objective == pytest.approx(_enumerate(rows, c), abs=1e-7)
        assert np.all(np.isin(solution.x[prob.binaries], (0.0, 1.0)))


def test_highs_backend_agrees_with_branch_and_bound(rng):
    for _ in range(10):
        prob, _, _ = _random_instance(rng)
        ours = milp_solver.solve(prob, gap=0.0, time_budget=60.0)
        theirs = milp_solver.solve(prob, gap=0.0, time_budget=60.0, solver="highs")
        assert theirs.backend == "highs"
        assert ours.objective == pytest.approx(theirs.objective, abs=1e-6)


def _knapsack():
    prob = MilpProblem("knapsack")
    values, weights = [10.0, 13.0, 7.0, 8.0], [3.0, 4.0, 2.0, 3.0]
    z = [prob.add_binary(f"item{i}") for i in range(4)]
    prob.add_constraint(dict(zip(z, weights)), LE, 7.0, "capacity")
    prob.set_objective({i: -v for i, v in zip(z, values)})
    return prob


def test_knapsack_optimum():
    prob = _knapsack()
    solution = milp_solver.solve(prob, gap=0.0)
    assert solution.objective == pytest.approx(-23.0)
    assert solution.value(prob, "item0") == 1.0
    assert solution.value(prob, "item1") == 1.0
    assert solution.gap == pytest.approx(0.0, abs=1e-9)


def test_node_limit_is_deterministic():
    first = milp_solver.solve(_knapsack(), gap=0.0, node_limit=50)
    second = milp_solver.solve(_knapsack(), gap=0.0, node_limit=50)
    assert first.nodes == second.nodes
    assert first.objective == second.objective
    assert first.bound <= first.objective


def test_infeasible_problem_is_reported():
    prob = MilpProblem("empty")
    z = prob.add_binary("z")
    prob.add_constraint({z: 1.0}, GE, 2.0)
    with pytest.raises(InfeasibleError):
        milp_solver.solve(prob)


def test_integer_infeasibility_is_reported():
    prob = MilpProblem("parity")
    a, b = prob.add_binary("a"), prob.add_binary("b")
    prob.add_constraint({a: 2.0, b: 2.0}, EQ, 1.0)
    with pytest.raises(InfeasibleError):
        milp_solver.solve(prob)


def test_problem_construction_checks():
    prob = MilpProblem()
    prob.add_var("x")
    with pytest.raises(SolverError):
        prob.add_var("x")
    with pytest.raises(SolverError):
        prob.add_var("y", lb=2.0, ub=1.0)
    with pytest.raises(SolverError):
        prob.add_constraint({5: 1.0}, LE, 0.0)
    with pytest.raises(SolverError):
        prob.add_constraint({0: 1.0}, "<", 0.0)
    with pytest.raises(SolverError):
        milp_solver.solve(prob, solver="cplex")


def test_lp_export_sections():
    prob = _knapsack()
    prob.add_var("slack[0]", -1.0, 2.0)
    text = milp_solver.export_lp(prob)
    lines = text.splitlines()
    assert lines[1] == "Minimize"
    assert "Subject To" in lines and "Bounds" in lines and "Binaries" in lines
    assert lines[-1] == "End"
    assert " capacity: 3 item0 + 4 item1 + 2 item2 + 3 item3 <= 7" in lines
    assert " -1 <= slack_0_ <= 2" in lines
    assert " item0 item1 item2 item3" in lines


def test_lp_export_keeps_sanitized_names_distinct():
    prob = MilpProblem("clash")
    a = prob.add_var("a[0]", 0.0, 1.0)
    b = prob.add_var("a_0_", 0.0, 2.0)
    prob.add_constraint({a: 1.0, b: 1.0}, LE, 1.5, name="row(1)")
    prob.add_constraint({a: 1.0, b: -1.0}, GE, -1.0, name="row[1]")
    lines = milp_solver.export_lp(prob).splitlines()
    assert " 0 <= a_0_ <= 1" in lines
    assert " 0 <= a_0__2 <= 2" in lines
    assert " row_1_: 1 a_0_ + 1 a_0__2 <= 1.5" in lines
    assert " row_1__2: 1 a_0_ - 1 a_0__2 >= -1" in lines


def test_every_relaxation_is_counted():
    solution = milp_solver.solve(_knapsack(), gap=0.0)
    # root plus at most two children per branched node
    assert solution.nodes <= solution.stats["lp_solves"] <= 1 + 2 * solution.nodes
