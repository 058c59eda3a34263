"""Path kernels on the branch graph: longest path, Yen's k shortest paths, hop neighbourhoods.

Edge weights are capacity over susceptance. Paths are stored as branch-id sequences
so parallel branches stay distinguishable.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .grid import Network
from .lp import LpProblem
from .milp import MilpProblem, MilpStatus, solve_milp

MTZ_GAP = 1e-2
MTZ_TIME_LIMIT = 600.0


@dataclass(frozen=True)
class Path:
    edges: tuple[int, ...]
    nodes: tuple[int, ...]
    weight: float
    certified: bool = True
    bound: float | None = None

    def __post_init__(self):
        if self.bound is None:
            object.__setattr__(self, "bound", self.weight)

    def __len__(self) -> int:
        return len(self.edges)


def path_weight(net: Network, edges: Iterable[int]) -> float:
    return math.fsum(net.branch_by_id[e].weight for e in edges)


def make_path(net: Network, start: int, edges: Iterable[int], **kw) -> Path:
    """Build a ``Path`` from a start bus and branch sequence, checking it is elementary."""
    edges = tuple(edges)
    nodes = [start]
    for e in edges:
        a, b = net.branch_by_id[e].ends
        if nodes[-1] == a:
            nodes.append(b)
        elif nodes[-1] == b:
            nodes.append(a)
        else:
            raise ValueError(f"branch {e} does not continue the path at bus {nodes[-1]}")
    if len(set(nodes)) != len(nodes):
        raise ValueError("path revisits a bus")
    return Path(edges, tuple(nodes), path_weight(net, edges), **kw)


def _check_ends(net: Network, i: int, j: int) -> None:
    if i == j:
        raise ValueError("path endpoints must differ")
    for b in (i, j):
        if b not in net.bus_index:
            raise KeyError(f"unknown bus {b}")


# -- longest path ---------------------------------------------------------------------------

def longest_path(net: Network, i: int, j: int, strategy: str = "exhaustive",
                 time_limit: float | None = MTZ_TIME_LIMIT) -> Path:
    """Maximum-weight elementary path from bus ``i`` to bus ``j``.

    ``exhaustive`` is an exact depth-first search with bound pruning, suitable for
    small grids. ``mtz_milp`` solves the Miller-Tucker-Zemlin model to a 1% gap; if
    the time limit hits first the path is flagged non-certified and ``bound``
    carries the solver's upper bound.
    """
    _check_ends(net, i, j)
    if strategy == "exhaustive":
        return _longest_dfs(net, i, j)
    if strategy == "mtz_milp":
        return _longest_mtz(net, i, j, time_limit)
    raise ValueError(f"unknown strategy {strategy!r}")


def _longest_dfs(net: Network, i: int, j: int) -> Path:
    adj = net.adjacency()
    for u in adj:
        adj[u].sort(key=lambda t: t[1])
    # best possible weight of the edge used to enter each bus
    enter = {u: max((net.branch_by_id[e].weight for _, e in nbrs), default=0.0)
             for u, nbrs in adj.items()}

    best_w = -1.0
    best_edges: tuple[int, ...] = ()
    visited = {i}
    stack_edges: list[int] = []

    def reach_bound(u: int) -> float:
        # buses still reachable from u avoiding the path; -1 if j is cut off
        seen = {u}
        queue = deque([u])
        total = 0.0
        while queue:
            a = queue.popleft()
            for b, _ in adj[a]:
                if b not in seen and b not in visited:
                    seen.add(b)
                    total += enter[b]
                    queue.append(b)
        return total if j in seen else -1.0

    def dfs(u: int, w: float) -> None:
        nonlocal best_w, best_edges
        if u == j:
            cand = tuple(stack_edges)
            if w > best_w or (w == best_w and cand < best_edges):
                best_w, best_edges = w, cand
            return
        extra = reach_bound(u)
        if extra < 0 or w + extra < best_w:
            return
        for v, e in adj[u]:
            if v in visited:
                continue
            visited.add(v)
            stack_edges.append(e)
            dfs(v, w + net.branch_by_id[e].weight)
            stack_edges.pop()
            visited.discard(v)

    dfs(i, 0.0)
    if best_w < 0:
        raise ValueError(f"no path between buses {i} and {j}")
    return make_path(net, i, best_edges)


def mtz_model(net: Network, i: int, j: int) -> tuple[MilpProblem, list[tuple[int, int, int]]]:
    """MTZ longest-path MILP (as a minimisation of negative weight).

    Variables are one binary per arc (both directions of every branch) followed by
    one order variable per bus. Returns the problem and the arc list (branch, tail, head).
    """
    arcs = []
    for br in net.branches:
        arcs.append((br.id, br.from_bus, br.to_bus))
        arcs.append((br.id, br.to_bus, br.from_bus))
    na, n = len(arcs), net.n_bus
    idx = net.bus_index
    nv = na + n
    c = np.zeros(nv)
    for a, (e, _, _) in enumerate(arcs):
        c[a] = -net.branch_by_id[e].weight

    out_rows = sp.lil_matrix((n, nv))
    in_rows = sp.lil_matrix((n, nv))
    for a, (_, t, h) in enumerate(arcs):
        out_rows[idx[t], a] = 1.0
        in_rows[idx[h], a] = 1.0
    out_rows, in_rows = out_rows.tocsr(), in_rows.tocsr()

    # flow conservation: out - in = 1 at i, -1 at j, 0 elsewhere
    eq = [out_rows - in_rows]
    rhs = np.zeros(n)
    rhs[idx[i]], rhs[idx[j]] = 1.0, -1.0
    fix_i = sp.csr_matrix(([1.0], ([0], [na + idx[i]])), shape=(1, nv))
    A_eq = sp.vstack(eq + [in_rows[idx[i]], out_rows[idx[j]], fix_i], format="csr")
    b_eq = np.r_[rhs, 0.0, 0.0, 0.0]

    ge = [-in_rows]
    g = [-np.ones(n)]
    mtz = sp.lil_matrix((na, nv))
    for a, (_, t, h) in enumerate(arcs):
        mtz[a, na + idx[h]] = 1.0
        mtz[a, na + idx[t]] = -1.0
        mtz[a, a] = -float(n)
    ge.append(mtz.tocsr())
    g.append(np.full(na, 1.0 - n))
    pair = sp.lil_matrix((na // 2, nv))
    for k in range(na // 2):
        pair[k, 2 * k] = pair[k, 2 * k + 1] = -1.0
    ge.append(pair.tocsr())
    g.append(-np.ones(na // 2))

    lower = np.zeros(nv)
    upper = np.r_[np.ones(na), np.full(n, n - 1.0)]
    lp = LpProblem.build(c, A_eq=A_eq, b_eq=b_eq, A_ge=sp.vstack(ge, format="csr"),
                         g_ge=np.concatenate(g), lower=lower, upper=upper)
    return MilpProblem(lp, tuple(range(na))), arcs


def _longest_mtz(net: Network, i: int, j: int, time_limit: float | None) -> Path:
    prob, arcs = mtz_model(net, i, j)
    res = solve_milp(prob, time_limit=time_limit, gap_tol=MTZ_GAP)
    if res.x is None:
        if res.status is MilpStatus.INFEASIBLE:
            raise ValueError(f"no path between buses {i} and {j}")
        raise TimeoutError("MTZ model found no path within the time limit")
    succ = {t: (e, h) for a, (e, t, h) in enumerate(arcs) if res.x[a] > 0.5}
    edges, u = [], i
    while u != j:
        e, u = succ[u]
        edges.append(e)
    certified = res.status is MilpStatus.OPTIMAL
    path = make_path(net, i, edges)
    bound = max(path.weight, -res.best_bound)
    return Path(path.edges, path.nodes, path.weight, certified, bound)


# -- k shortest paths -----------------------------------------------------------------------

def _dijkstra(net: Network, adj, src: int, dst: int, banned_edges: set[int],
              banned_nodes: set[int]) -> tuple[int, ...] | None:
    """Shortest src-dst branch sequence, ties broken by lexicographic edge ids."""
    heap = [(0.0, (), src)]
    done: set[int] = set()
    while heap:
        w, edges, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == dst:
            return edges
        done.add(u)
        for v, e in adj[u]:
            if v in done or v in banned_nodes or e in banned_edges:
                continue
            heapq.heappush(heap, (w + net.branch_by_id[e].weight, edges + (e,), v))
    return None


def k_shortest_paths(net: Network, i: int, j: int, K: int,
                     exclude: Iterable[int] = ()) -> list[Path]:
    """Up to ``K`` loopless ``i``-``j`` paths in nondecreasing weight (Yen's algorithm)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    _check_ends(net, i, j)
    adj = net.adjacency(exclude)
    first = _dijkstra(net, adj, i, j, set(), set())
    if first is None:
        return []
    found = [make_path(net, i, first)]
    seen = {first}
    candidates: list[tuple[float, tuple[int, ...]]] = []
    while len(found) < K:
        prev = found[-1]
        for s in range(len(prev.edges)):
            root = prev.edges[:s]
            spur = prev.nodes[s]
            banned = {p.edges[s] for p in found if p.edges[:s] == root and len(p.edges) > s}
            tail = _dijkstra(net, adj, spur, j, banned, set(prev.nodes[:s]))
            if tail is None:
                continue
            edges = root + tail
            if edges not in seen:
                seen.add(edges)
                heapq.heappush(candidates, (path_weight(net, edges), edges))
        if not candidates:
            break
        _, edges = heapq.heappop(candidates)
        found.append(make_path(net, i, edges))
    return found


def all_simple_paths(net: Network, i: int, j: int) -> list[Path]:
    """Every elementary ``i``-``j`` path, sorted by (weight, edge ids). Small graphs only."""
    _check_ends(net, i, j)
    adj = net.adjacency()
    out = []

    def dfs(u, visited, edges):
        if u == j:
            out.append(make_path(net, i, edges))
            return
        for v, e in adj[u]:
            if v not in visited:
                dfs(v, visited | {v}, edges + (e,))

    dfs(i, {i}, ())
    return sorted(out, key=lambda p: (p.weight, p.edges))


# -- neighbourhoods -------------------------------------------------------------------------

def hop_distances(net: Network, branch_id: int) -> dict[int, int]:
    """Hops from each bus to the nearer endpoint of a branch, with that branch removed."""
    br = net.branch_by_id[branch_id]
    adj = net.adjacency(exclude=(branch_id,))
    dist = {br.from_bus: 0, br.to_bus: 0}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        for v, _ in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def hop_neighborhood(net: Network, branch_id: int, k: int) -> set[int]:
    """Branches other than ``branch_id`` whose endpoints are both within ``k`` hops of it."""
    if k < 1:
        raise ValueError("k must be at least 1")
    dist = hop_distances(net, branch_id)
    near = {u for u, d in dist.items() if d <= k}
    return {br.id for br in net.branches
            if br.id != branch_id and br.from_bus in near and br.to_bus in near}
