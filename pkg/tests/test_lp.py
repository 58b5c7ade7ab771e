import numpy as np
import pytest
from scipy.optimize import linprog

from geocert.errors import SolverStalledError
from geocert.lp import EQ, GE, LE, LinearProgram, solve_lp
import geocert.lp as lp_mod
from oracles import textbook_simplex


def test_max_single_variable():
    sol = solve_lp(LinearProgram([1.0], "max", [[1.0]], [LE], [3.0]))
    assert sol.optimal
    assert sol.values[0] == pytest.approx(3.0)


def test_min_sum_covering():
    sol = solve_lp(LinearProgram([1.0, 1.0], "min", [[1.0, 1.0]], [GE], [2.0]))
    assert sol.optimal and sol.objective_value == pytest.approx(2.0)


def test_infeasible_and_unbounded():
    inf = solve_lp(LinearProgram([1.0], "min", [[1.0], [1.0]], [LE, GE], [1.0, 2.0]))
    assert inf.status == "infeasible"
    unb = solve_lp(LinearProgram([1.0], "max", [[1.0]], [GE], [0.0]))
    assert unb.status == "unbounded"


def test_free_and_bounded_variables():
    # min x - y, x in [-2, 5], y free, y <= 3, x + y >= -10
    lp = LinearProgram([1.0, -1.0], "min", [[0.0, 1.0], [1.0, 1.0]], [LE, GE], [3.0, -10.0],
                       bounds=[(-2.0, 5.0), (None, None)])
    sol = solve_lp(lp)
    assert sol.optimal
    assert sol.values == pytest.approx([-2.0, 3.0])
    assert sol.objective_value == pytest.approx(-5.0)


def test_duals_hand_example():
    # min 2x + 3y, x + y >= 2, x - y = 0.5 -> x = 1.25, y = 0.75
    lp = LinearProgram([2.0, 3.0], "min", [[1.0, 1.0], [1.0, -1.0]], [GE, EQ], [2.0, 0.5])
    sol = solve_lp(lp)
    assert sol.values == pytest.approx([1.25, 0.75])
    assert sol.duals == pytest.approx([2.5, -0.5])
    assert sol.duals @ lp.rhs == pytest.approx(sol.objective_value)


def random_lp(rng, n=20, m=40):
    A = rng.uniform(0.0, 1.0, (m, n))
    b = rng.uniform(1.0, 10.0, m)
    c = rng.uniform(-1.0, 2.0, n)
    return c, A, b


def test_random_lps_match_textbook_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        c, A, b = random_lp(rng)
        status, _, ref = textbook_simplex(c, A, b)
        sol = solve_lp(LinearProgram(c, "max", A, [LE] * len(b), b))
        assert status == sol.status == "optimal"
        worst = max(worst, abs(sol.objective_value - ref))
        assert np.all(A @ sol.values <= b + 1e-7)
        assert np.all(sol.values >= -1e-7)
    assert worst <= 1e-6


def test_mixed_relations_match_scipy():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n, m = 8, 12
        x0 = rng.uniform(-1, 1, n)
        A = rng.normal(size=(m, n))
        rel = rng.choice([LE, GE, EQ], size=m, p=[0.45, 0.45, 0.1]).tolist()
        slack = rng.uniform(0.0, 1.0, m)
        b = A @ x0 + np.where(np.array(rel) == LE, slack, np.where(np.array(rel) == GE, -slack, 0.0))
        c = rng.normal(size=n)
        bounds = [(-3.0, 3.0)] * n
        sol = solve_lp(LinearProgram(c, "min", A, rel, b, bounds))
        ub = [A[i] if r == LE else -A[i] for i, r in enumerate(rel) if r != EQ]
        bub = [b[i] if r == LE else -b[i] for i, r in enumerate(rel) if r != EQ]
        eq = [i for i, r in enumerate(rel) if r == EQ]
        ref = linprog(c, A_ub=np.array(ub), b_ub=np.array(bub),
                      A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                      bounds=bounds, method="highs")
        assert sol.optimal and ref.status == 0
        assert sol.objective_value == pytest.approx(ref.fun, abs=1e-6)


def test_duality_on_random_instances():
    rng = np.random.default_rng(3)
    for _ in range(30):
        c, A, b = random_lp(rng, 10, 15)
        lp = LinearProgram(c, "max", A, [LE] * len(b), b)
        sol = solve_lp(lp)
        assert sol.duals @ b == pytest.approx(sol.objective_value, abs=1e-6)
        # dual feasibility of max c.x, Ax <= b, x >= 0: y >= 0, A^T y >= c
        assert np.all(sol.duals >= -1e-9)
        assert np.all(A.T @ sol.duals >= c - 1e-7)


def test_deterministic_pivots():
    c, A, b = random_lp(np.random.default_rng(5))
    s1 = solve_lp(LinearProgram(c, "max", A, [LE] * len(b), b))
    s2 = solve_lp(LinearProgram(c, "max", A, [LE] * len(b), b))
    assert s1.pivots == s2.pivots
    assert np.array_equal(s1.values, s2.values)


def test_degenerate_problem_terminates():
    # classic cycling example (Beale); Bland fallback must terminate
    c = np.array([0.75, -20.0, 0.5, -6.0])
    A = np.array([[0.25, -8.0, -1.0, 9.0], [0.5, -12.0, -0.5, 3.0], [0.0, 0.0, 1.0, 0.0]])
    b = np.array([0.0, 0.0, 1.0])
    sol = solve_lp(LinearProgram(c, "max", A, [LE] * 3, b))
    assert sol.optimal and sol.objective_value == pytest.approx(1.25)


def test_pivot_cap_raises(monkeypatch):
    monkeypatch.setattr(lp_mod, "MAX_PIVOTS", 1)
    c, A, b = random_lp(np.random.default_rng(0), 5, 5)
    with pytest.raises(SolverStalledError):
        solve_lp(LinearProgram(c, "max", A, [LE] * 5, b))


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        LinearProgram([1.0, np.inf])
    with pytest.raises(ValueError):
        LinearProgram([1.0, 1.0], "min", [[1.0, 1.0]], [LE, LE], [1.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], "min", [[1.0]], ["<"], [1.0])
