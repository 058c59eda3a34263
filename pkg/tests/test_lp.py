import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from netgen import random_boxed_lp, vertex_oracle
from otsbigm.lp import LpProblem, LpSolution, Status, check_kkt, solve_lp, write_mps


def test_bound_attained():
    s = solve_lp(LpProblem.build([1.0], A_ge=[[1.0]], g_ge=[0.0]))
    assert s.status is Status.OPTIMAL and s.objective == 0.0


def test_single_constraint_dual_sign():
    # min -x  s.t.  -x >= -3 (i.e. x <= 3), x >= 0
    s = solve_lp(LpProblem.build([-1.0], A_ge=[[-1.0]], g_ge=[-3.0]))
    assert s.objective == pytest.approx(-3.0)
    # written as a >= row the dual is +1; read as the x <= 3 row it is -1
    assert s.y[0] == pytest.approx(1.0)
    assert -s.y[0] == pytest.approx(-1.0)


def test_empty_polyhedron():
    s = solve_lp(LpProblem.build([0.0], A_ge=[[1.0], [-1.0]], g_ge=[1.0, 0.0]))
    assert s.status is Status.INFEASIBLE


def test_unbounded():
    p = LpProblem.build([-1.0, 0.0], A_ge=[[1.0, -1.0]], g_ge=[0.0])
    assert solve_lp(p).status is Status.UNBOUNDED


def test_free_variables_and_equalities():
    # min x1 + x2 with x1 - x2 = 1, x1 + x2 >= -4, both free
    p = LpProblem.build([1.0, 1.0], A_eq=[[1.0, -1.0]], b_eq=[1.0], A_ge=[[1.0, 1.0]],
                        g_ge=[-4.0], lower=-np.inf, upper=np.inf)
    s = solve_lp(p)
    assert s.objective == pytest.approx(-4.0)
    assert s.y[0] == pytest.approx(1.0)
    assert s.u[0] == pytest.approx(0.0, abs=1e-12)


def test_kkt_detects_perturbed_primal():
    p = LpProblem.build([1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0])
    s = solve_lp(p)
    assert check_kkt(p, s).duality_gap <= 1e-9
    bumped = LpSolution(s.status, s.x + 0.1, s.u, s.y, s.z, s.objective)
    assert check_kkt(p, bumped).primal_inf == pytest.approx(0.2)


def test_inconsistent_dimensions():
    with pytest.raises(ValueError):
        LpProblem.build([1.0, 1.0], A_eq=[[1.0]], b_eq=[1.0])


def test_mps_export_mentions_every_row_and_bound():
    p = LpProblem.build([1.0, -1.0], A_eq=[[1.0, 1.0]], b_eq=[2.0], A_ge=[[1.0, 0.0]],
                        g_ge=[0.5], lower=[0.0, -np.inf], upper=[4.0, np.inf])
    text = write_mps(p)
    assert " E  E0" in text and " G  G0" in text
    assert "UP BND       X0" in text and "FR BND       X1" in text
    assert text.rstrip().endswith("ENDATA")


def test_warm_start_after_bound_change_matches_cold():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(6, 5))
    p = LpProblem.build(rng.normal(size=5), A_ge=A, g_ge=A @ rng.uniform(0, 1, 5) - 1,
                        lower=np.zeros(5), upper=np.ones(5))
    first = solve_lp(p)
    hi = p.upper.copy()
    hi[int(np.argmax(first.x))] = 0.0
    tight = p.with_bounds(p.lower, hi)
    warm, cold = solve_lp(tight, first.basis), solve_lp(tight)
    assert warm.status is cold.status
    if cold.optimal:
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_vertex_oracle_agreement():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        c, A, g, E, b, lo, hi = random_boxed_lp(rng)
        s = solve_lp(LpProblem.build(c, A_eq=E, b_eq=b, A_ge=A, g_ge=g, lower=lo, upper=hi))
        expect = vertex_oracle(c, A, g, E, b, lo, hi)
        if expect is None:
            assert s.status is Status.INFEASIBLE
        else:
            assert s.optimal and abs(s.objective - expect) <= 1e-7 * (1 + abs(expect))


def test_random_sparse_lps_match_highs():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n, m = 20, 12
        A = sp.random(m, n, density=0.3, random_state=rng, format="csr")
        E = sp.random(3, n, density=0.4, random_state=rng, format="csr")
        x0 = rng.uniform(0, 1, n)
        p = LpProblem.build(rng.normal(size=n), A_eq=E, b_eq=E @ x0, A_ge=A, g_ge=A @ x0 - 0.1,
                            lower=np.zeros(n), upper=np.full(n, 2.0))
        s = solve_lp(p)
        ref = linprog(p.c, A_ub=-A.toarray(), b_ub=-p.g_ge, A_eq=E.toarray(), b_eq=p.b_eq,
                      bounds=list(zip(p.lower, p.upper)), method="highs")
        assert s.optimal
        assert s.objective == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
        assert s.residuals.ok()
        assert np.all(s.y >= -1e-9)
        # strong duality in the stated convention
        lhs = p.c @ s.x
        rhs = s.u @ p.b_eq + s.y @ p.g_ge
        zl = np.maximum(s.z, 0) @ np.where(np.isfinite(p.lower), p.lower, 0)
        zu = np.maximum(-s.z, 0) @ np.where(np.isfinite(p.upper), p.upper, 0)
        assert lhs == pytest.approx(rhs + zl - zu, abs=1e-6 * (1 + abs(lhs)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_planted_feasible_never_infeasible(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 8)), int(rng.integers(1, 8))
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(-1, 1, n)
    p = LpProblem.build(rng.normal(size=n), A_ge=A, g_ge=A @ x0, lower=np.full(n, -1.0),
                        upper=np.full(n, 1.0))
    s = solve_lp(p)
    assert s.optimal
    assert s.residuals.ok()


def test_deterministic():
    rng = np.random.default_rng(11)
    c, A, g, E, b, lo, hi = random_boxed_lp(rng)
    p = LpProblem.build(c, A_eq=E, b_eq=b, A_ge=A, g_ge=g, lower=lo, upper=hi)
    a, b2 = solve_lp(p), solve_lp(p)
    assert a.status is b2.status and (not a.optimal or a.objective == b2.objective)
