"""Big-M linearised DC optimal transmission switching.

Variables are ``[p | theta | f | x]`` where ``x`` has one binary per switchable
branch (1 = in service). Fixed branches keep their plain Kirchhoff equality.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bigm import BigMVector
from .grid import Network
from .lp import LpProblem
from .milp import DEFAULT_GAP, MilpProblem, MilpStatus, solve_milp
from .opf import _balance_rows, _Layout, _kirchhoff_rows

log = logging.getLogger(__name__)

DEFAULT_L = 45


class MissingBigMError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class OtsModel:
    milp: MilpProblem
    x_index: dict[int, int]
    L: int
    layout: _Layout

    @property
    def n_binaries(self) -> int:
        return len(self.x_index)


@dataclass(frozen=True, eq=False)
class OtsResult:
    status: MilpStatus
    topology: dict[int, int]
    p: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    objective: float
    best_bound: float
    opt_gap: float
    wall_time: float
    nodes: int
    connected: bool

    @property
    def switched_off(self) -> tuple[int, ...]:
        return tuple(sorted(b for b, v in self.topology.items() if v == 0))

    @property
    def switched_off_count(self) -> int:
        return len(self.switched_off)

    def to_json(self) -> str:
        return json.dumps({
            "status": self.status.value, "objective": self.objective,
            "best_bound": self.best_bound, "opt_gap": self.opt_gap,
            "wall_time": self.wall_time, "nodes": self.nodes, "connected": self.connected,
            "switched_off": list(self.switched_off),
            "topology": {str(b): v for b, v in sorted(self.topology.items())},
            "p": self.p.tolist(), "theta": self.theta.tolist(), "f": self.f.tolist(),
        }, indent=1)


def build_ots(net: Network, M: BigMVector, L: int = DEFAULT_L) -> OtsModel:
    if L < 0:
        raise ValueError("L must be non-negative")
    sw = list(net.switchable_ids)
    missing = [b for b in sw if b not in M.M]
    if missing:
        raise MissingBigMError(f"no big-M value for branches {missing}")

    lay = _Layout(net)
    ns = len(sw)
    n = lay.n + ns
    pos = {br.id: k for k, br in enumerate(net.branches)}
    x_index = {b: lay.n + s for s, b in enumerate(sw)}
    pad = lambda A: sp.hstack([A, sp.csr_matrix((A.shape[0], ns))]).tocsr()  # noqa: E731

    A_bal, b_bal = _balance_rows(net, lay)
    fixed = [k for k, br in enumerate(net.branches) if not br.switchable]
    A_eq = sp.vstack([pad(A_bal), pad(_kirchhoff_rows(net, lay, fixed))]).tocsr()
    b_eq = np.concatenate([b_bal, np.zeros(len(fixed))])

    # big-M Kirchhoff pair and capacity coupling, four >= rows per switchable branch
    rows, cols, vals, rhs, labels = [], [], [], [], []
    r = 0
    for b in sw:
        br = net.branch_by_id[b]
        k, xi, m = pos[b], x_index[b], M.M[b]
        ti, tj, fk = lay.t0 + net.bus_index[br.from_bus], lay.t0 + net.bus_index[br.to_bus], lay.f0 + k
        for sgn in (1.0, -1.0):
            # sgn * (B dtheta - f) - M x >= -M
            rows += [r] * 4
            cols += [ti, tj, fk, xi]
            vals += [sgn * br.susceptance, -sgn * br.susceptance, -sgn, -m]
            rhs.append(-m)
            labels.append(("bigm", b))
            r += 1
        for sgn in (1.0, -1.0):
            # fmax x - sgn f >= 0
            rows += [r, r]
            cols += [fk, xi]
            vals += [-sgn, br.capacity]
            rhs.append(0.0)
            labels.append(("capacity", b))
            r += 1
    # cardinality: sum x >= ns - L
    rows += [r] * ns
    cols += list(x_index.values())
    vals += [1.0] * ns
    rhs.append(float(ns - L))
    labels.append(("cardinality", None))
    A_ge = sp.csr_matrix((vals, (rows, cols)), shape=(r + 1, n))

    c = np.zeros(n)
    c[:lay.ng] = [g.cost for g in net.generators]
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[:lay.ng] = [g.p_min for g in net.generators]
    upper[:lay.ng] = [g.p_max for g in net.generators]
    ref = min(net.generator_buses) if net.generator_buses else net.buses[0].id
    lower[lay.t0 + net.bus_index[ref]] = upper[lay.t0 + net.bus_index[ref]] = 0.0
    cap = np.array([br.capacity for br in net.branches])
    lower[lay.f0:lay.n] = -cap
    upper[lay.f0:lay.n] = cap
    lower[lay.n:] = 0.0
    upper[lay.n:] = 1.0
    lp = LpProblem.build(c, A_eq, b_eq, A_ge, np.array(rhs), lower, upper, ge_labels=labels)
    return OtsModel(MilpProblem(lp, tuple(x_index.values())), x_index, L, lay)


def solve_ots(net: Network, M: BigMVector, L: int = DEFAULT_L, time_limit: float | None = 600.0,
              gap_tol: float = DEFAULT_GAP, log_every: int = 0) -> OtsResult | None:
    """Solve the switching MILP; ``None`` if no topology within ``L`` serves the load."""
    model = build_ots(net, M, L)
    res = solve_milp(model.milp, time_limit=time_limit, gap_tol=gap_tol, log_every=log_every)
    if res.x is None:
        if res.status is MilpStatus.INFEASIBLE:
            return None
        raise TimeoutError("no feasible topology found within the time limit")
    lay = model.layout
    x = res.x
    topology = {b: int(round(x[i])) for b, i in model.x_index.items()}
    off = [b for b, v in topology.items() if v == 0]
    connected = net.is_connected(off)
    if not connected:
        log.warning("incumbent topology is disconnected (off: %s)", off)
    return OtsResult(res.status, topology, x[:lay.ng].copy(), x[lay.t0:lay.f0].copy(),
                     x[lay.f0:lay.n].copy(), res.objective, res.best_bound, res.opt_gap,
                     res.wall_time, res.nodes, connected)
