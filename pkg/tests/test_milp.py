import itertools
import logging

import numpy as np
import pytest

from otsbigm.lp import LpProblem, Status, solve_lp
from otsbigm.milp import (MilpProblem, MilpStatus, Node, branch, gap, most_fractional,
                          solve_milp)


def random_milp(rng, nb, nc=2):
    n = nb + nc
    A = rng.normal(size=(nb + 2, n))
    g = A @ rng.uniform(0, 1, n) - rng.uniform(0, 1.5, nb + 2)
    lo = np.zeros(n)
    hi = np.r_[np.ones(nb), rng.uniform(1, 3, nc)]
    return MilpProblem(LpProblem.build(rng.normal(size=n), A_ge=A, g_ge=g, lower=lo, upper=hi),
                       tuple(range(nb)))


def brute_force(p: MilpProblem):
    best = np.inf
    for bits in itertools.product([0.0, 1.0], repeat=len(p.binaries)):
        lo, hi = p.lp.lower.copy(), p.lp.upper.copy()
        lo[list(p.binaries)] = hi[list(p.binaries)] = bits
        s = solve_lp(p.lp.with_bounds(lo, hi))
        if s.status is Status.OPTIMAL:
            best = min(best, s.objective)
    return best


def test_matches_enumeration_up_to_twelve_binaries():
    rng = np.random.default_rng(42)
    for nb in [2, 3, 5, 8, 12]:
        for _ in range(4 if nb < 12 else 1):
            p = random_milp(rng, nb)
            res = solve_milp(p, gap_tol=1e-9)
            expect = brute_force(p)
            if np.isinf(expect):
                assert res.status is MilpStatus.INFEASIBLE
            else:
                assert res.status is MilpStatus.OPTIMAL
                assert res.objective == pytest.approx(expect, abs=1e-6 * max(1, abs(expect)))
                assert res.best_bound <= res.objective + 1e-6


def test_bound_trace_monotone_and_reproducible():
    p = random_milp(np.random.default_rng(3), 10)
    a, b = solve_milp(p, gap_tol=0), solve_milp(p, gap_tol=0)
    assert all(y >= x for x, y in zip(a.bound_trace, a.bound_trace[1:]))
    assert a.nodes == b.nodes and a.objective == b.objective


def test_all_fixed_is_plain_lp():
    p = random_milp(np.random.default_rng(8), 4)
    lo, hi = p.lp.lower.copy(), p.lp.upper.copy()
    lo[:4] = 1.0
    fixed = MilpProblem(p.lp.with_bounds(lo, hi), p.binaries)
    lp = solve_lp(fixed.lp)
    res = solve_milp(fixed)
    if lp.optimal:
        assert res.nodes == 1 and res.objective == pytest.approx(lp.objective)
    else:
        assert res.status is MilpStatus.INFEASIBLE


def test_branch_children_partition():
    node = Node(np.zeros(3), np.ones(3), 1.5, depth=2)
    down, up = branch(node, 1, 0.5)
    assert (down.upper[1], down.lower[1]) == (0.0, 0.0)
    assert (up.lower[1], up.upper[1]) == (1.0, 1.0)
    assert down.depth == up.depth == 3 and node.upper[1] == 1.0
    with pytest.raises(ValueError):
        branch(node, 1, 1.0)


def test_most_fractional_tie_breaks_on_smallest_index():
    x = np.array([0.3, 0.7, 1.0, 0.0])
    assert most_fractional(x, np.arange(4)) == 0
    assert most_fractional(np.array([1.0, 0.0]), np.arange(2)) == -1


def test_gap_definition():
    assert gap(10.0, 9.0) == pytest.approx(0.1)
    assert gap(0.0, 0.0) == 0.0


def test_node_limit_returns_best_incumbent_with_bound():
    p = random_milp(np.random.default_rng(1), 12)
    full = solve_milp(p, gap_tol=0)
    cut = solve_milp(p, gap_tol=0, node_limit=3)
    assert cut.nodes == 3
    if cut.x is not None:
        assert cut.status is MilpStatus.FEASIBLE_TIME_LIMIT
        assert cut.best_bound <= full.objective + 1e-9 <= cut.objective + 1e-9
    else:
        assert cut.status is MilpStatus.NO_SOLUTION_TIME_LIMIT


def test_binary_bounds_checked():
    lp = LpProblem.build([1.0], upper=[2.0])
    with pytest.raises(ValueError):
        MilpProblem(lp, (0,))


def test_progress_log_format(caplog):
    p = random_milp(np.random.default_rng(3), 8)
    with caplog.at_level(logging.INFO, logger="otsbigm.milp"):
        solve_milp(p, gap_tol=0, log_every=1)
    assert caplog.records
    words = caplog.records[0].getMessage().split()
    assert words[0::2] == ["node", "depth", "bound", "incumbent", "gap"]
