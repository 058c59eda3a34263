"""Random fixtures and independent oracles shared by the test modules."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from otsbigm.grid import Branch, Bus, Generator, Network


def random_network(rng: np.random.Generator, n_bus: int, n_branch: int,
                   max_tries: int = 200) -> Network:
    """Connected network with a feasible nominal OPF.

    A random spanning tree plus extra (possibly parallel) branches, two or three
    generators with distinct costs and enough headroom to cover the demand.
    """
    for _ in range(max_tries):
        edges = [(int(rng.integers(0, v)), v) for v in range(1, n_bus)]
        while len(edges) < n_branch:
            a, b = rng.choice(n_bus, size=2, replace=False)
            edges.append((int(a), int(b)))
        branches = [Branch(k, a + 1, b + 1, float(rng.uniform(1.0, 10.0)),
                           float(rng.uniform(0.3, 1.5))) for k, (a, b) in enumerate(edges)]
        n_gen = int(rng.integers(2, 4))
        gen_buses = rng.choice(n_bus, size=n_gen, replace=False) + 1
        demand = np.where(rng.random(n_bus) < 0.6, rng.uniform(0.1, 0.6, n_bus), 0.0)
        demand[gen_buses - 1] = 0.0
        if demand.sum() == 0:
            continue
        cap = 1.4 * demand.sum() / n_gen
        gens = [Generator(int(b), float(c), 0.0, float(cap))
                for b, c in zip(gen_buses, rng.permutation(np.arange(1, n_gen + 1) * 10.0))]
        buses = [Bus(i + 1, float(demand[i])) for i in range(n_bus)]
        net = Network(buses, branches, gens, base_mva=100.0, name="random")
        if opf_oracle(net) is not None:
            return net
    raise RuntimeError("could not generate a feasible network")


def opf_oracle(net: Network, removed=()) -> float | None:
    """DC-OPF objective via HiGHS, built directly from the network data."""
    removed = set(removed)
    gens = net.generators
    ng, nb = len(gens), net.n_bus
    live = [br for br in net.branches if br.id not in removed]
    nl = len(live)
    n = ng + nb + nl
    idx = net.bus_index
    A = np.zeros((nb + nl, n))
    b = np.zeros(nb + nl)
    for g, gen in enumerate(gens):
        A[idx[gen.bus], g] += 1.0
    for k, br in enumerate(live):
        A[idx[br.from_bus], ng + nb + k] -= 1.0
        A[idx[br.to_bus], ng + nb + k] += 1.0
        r = nb + k
        A[r, ng + idx[br.from_bus]] = br.susceptance
        A[r, ng + idx[br.to_bus]] = -br.susceptance
        A[r, ng + nb + k] = -1.0
    b[:nb] = net.demand
    bounds = [(g.p_min, g.p_max) for g in gens] + [(None, None)] * nb
    bounds += [(-br.capacity, br.capacity) for br in live]
    c = np.r_[[g.cost for g in gens], np.zeros(nb + nl)]
    res = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs")
    return res.fun if res.status == 0 else None


def enumerate_ots(net: Network, L: int) -> tuple[float, tuple[int, ...]]:
    """Best objective over connected topologies with at most ``L`` switchable branches off."""
    sw = net.switchable_ids
    best, arg = math.inf, ()
    for r in range(min(L, len(sw)) + 1):
        for off in itertools.combinations(sw, r):
            if not net.is_connected(off):
                continue
            z = opf_oracle(net, off)
            if z is not None and z < best - 1e-12:
                best, arg = z, off
    return best, arg


def vertex_oracle(c, A_ge, g, A_eq, b, lo, hi) -> float | None:
    """Minimum of c^T x over all basic feasible solutions of a boxed LP."""
    n = len(c)
    rows = [(A_ge[i], g[i]) for i in range(len(g))]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows += [(e, lo[j]), (-e, -hi[j])]
    ge = np.array([r for r, _ in rows])
    rhs = np.array([v for _, v in rows])
    need = n - len(b)
    best = None
    for active in itertools.combinations(range(len(rows)), need):
        M = np.vstack([A_eq, ge[list(active)]]) if len(b) else ge[list(active)]
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, np.r_[b, rhs[list(active)]])
        if np.all(ge @ x >= rhs - 1e-9) and (not len(b) or np.allclose(A_eq @ x, b, atol=1e-9)):
            z = float(c @ x)
            best = z if best is None else min(best, z)
    return best


def random_boxed_lp(rng: np.random.Generator):
    """Small dense LP with box bounds; feasible about half of the time."""
    n = int(rng.integers(2, 5))
    m = int(rng.integers(1, 5))
    meq = int(rng.integers(0, 2))
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    lo = -rng.uniform(0, 2, n)
    hi = rng.uniform(0, 2, n)
    x0 = rng.uniform(lo, hi)
    g = A @ x0 + rng.normal(scale=0.5, size=m)
    E = rng.normal(size=(meq, n))
    b = E @ x0
    return c, A, g, E, b, lo, hi
