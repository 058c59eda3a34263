"""LP-based branch and bound for mixed-binary minimisation problems."""

from __future__ import annotations

import enum
import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .lp import Basis, LpProblem, LpSolution, Status, solve_lp

log = logging.getLogger(__name__)

INT_TOL = 1e-6
DEFAULT_GAP = 1e-4


class MilpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE_TIME_LIMIT = "FeasibleTimeLimit"
    NO_SOLUTION_TIME_LIMIT = "NoSolutionTimeLimit"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True, eq=False)
class MilpProblem:
    lp: LpProblem
    binaries: tuple[int, ...]

    def __post_init__(self):
        b = np.asarray(self.binaries, dtype=int)
        if np.any(self.lp.lower[b] < 0) or np.any(self.lp.upper[b] > 1):
            raise ValueError("binary variables must have bounds within [0, 1]")


@dataclass(frozen=True, eq=False)
class MilpResult:
    status: MilpStatus
    x: np.ndarray | None
    objective: float
    best_bound: float
    opt_gap: float
    nodes: int
    wall_time: float
    bound_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def has_solution(self) -> bool:
        return self.x is not None


@dataclass(eq=False)
class Node:
    lower: np.ndarray
    upper: np.ndarray
    bound: float
    depth: int = 0
    basis: Basis | None = None


def branch(node: Node, j: int, value: float) -> tuple[Node, Node]:
    """Split on binary ``j``: the down child fixes it to 0, the up child to 1."""
    if not (INT_TOL < value < 1 - INT_TOL):
        raise ValueError(f"variable {j} is not fractional ({value})")
    down_hi = node.upper.copy()
    down_hi[j] = 0.0
    up_lo = node.lower.copy()
    up_lo[j] = 1.0
    down = Node(node.lower, down_hi, node.bound, node.depth + 1, node.basis)
    up = Node(up_lo, node.upper, node.bound, node.depth + 1, node.basis)
    return down, up


def most_fractional(x: np.ndarray, binaries: np.ndarray) -> int:
    """Index (into ``x``) of the most fractional binary, or -1 if all integral."""
    vals = x[binaries]
    frac = np.abs(vals - np.round(vals))
    mask = frac > INT_TOL
    if not np.any(mask):
        return -1
    # rounded so 0.3 and 0.7 tie; argmax then takes the smallest index
    score = np.where(mask, np.round(np.minimum(vals, 1.0 - vals), 9), -np.inf)
    return int(binaries[int(np.argmax(score))])


def gap(objective: float, bound: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    return max(0.0, (objective - bound) / max(abs(objective), 1e-10))


def solve_milp(p: MilpProblem, time_limit: float | None = None, gap_tol: float = DEFAULT_GAP,
               node_limit: int | None = None, log_every: int = 0) -> MilpResult:
    """Best-bound search with depth-first plunging and most-fractional branching."""
    start = time.perf_counter()
    bins = np.asarray(p.binaries, dtype=int)
    seq = count()
    heap: list[tuple[float, int, Node]] = []
    incumbent: np.ndarray | None = None
    z_inc = math.inf
    best_bound = -math.inf
    trace: list[float] = []
    nodes = 0

    def solve_node(node: Node) -> LpSolution:
        return solve_lp(p.lp.with_bounds(node.lower, node.upper), node.basis)

    def prunable(bound: float) -> bool:
        return incumbent is not None and z_inc - bound <= gap_tol * max(abs(z_inc), 1e-10)

    def global_bound(current: Node | None) -> float:
        open_bounds = [item[0] for item in heap]
        if current is not None:
            open_bounds.append(current.bound)
        if not open_bounds:
            return z_inc
        return min(min(open_bounds), z_inc)

    root = Node(p.lp.lower.copy(), p.lp.upper.copy(), -math.inf)
    node: Node | None = root
    timed_out = False
    while node is not None or heap:
        if node is None:
            _, _, node = heapq.heappop(heap)
            if prunable(node.bound):
                node = None
                continue
        elapsed = time.perf_counter() - start
        if (time_limit is not None and elapsed > time_limit) or \
                (node_limit is not None and nodes >= node_limit):
            heapq.heappush(heap, (node.bound, next(seq), node))
            timed_out = True
            break

        nodes += 1
        sol = solve_node(node)
        if sol.status is Status.UNBOUNDED:
            raise ValueError("LP relaxation is unbounded")
        if sol.status is Status.INFEASIBLE:
            node = None
        else:
            node.bound = max(node.bound, sol.objective)
            node.basis = sol.basis
            if prunable(node.bound):
                node = None
            else:
                j = most_fractional(sol.x, bins)
                if j < 0:
                    if sol.objective < z_inc:
                        x = sol.x.copy()
                        x[bins] = np.round(x[bins])
                        incumbent, z_inc = x, sol.objective
                    node = None
                else:
                    down, up = branch(node, j, sol.x[j])
                    first, second = (up, down) if sol.x[j] >= 0.5 else (down, up)
                    heapq.heappush(heap, (second.bound, next(seq), second))
                    node = first

        gb = global_bound(node)
        best_bound = max(best_bound, gb) if math.isfinite(gb) else best_bound
        trace.append(best_bound)
        if log_every and nodes % log_every == 0:
            log.info("node %d depth %d bound %.6g incumbent %.6g gap %.3g", nodes,
                     node.depth if node is not None else -1, best_bound, z_inc,
                     gap(z_inc, best_bound))
        if incumbent is not None and gap(z_inc, best_bound) <= gap_tol:
            heap.clear()
            node = None

    wall = time.perf_counter() - start
    if timed_out:
        gb = global_bound(None)
        best_bound = max(best_bound, gb) if math.isfinite(gb) else best_bound
        status = MilpStatus.FEASIBLE_TIME_LIMIT if incumbent is not None \
            else MilpStatus.NO_SOLUTION_TIME_LIMIT
    elif incumbent is None:
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, math.inf, math.inf, nodes, wall,
                          tuple(trace))
    else:
        status = MilpStatus.OPTIMAL
        best_bound = min(max(best_bound, -math.inf), z_inc)
    return MilpResult(status, incumbent, z_inc, best_bound, gap(z_inc, best_bound), nodes, wall,
                      tuple(trace))
