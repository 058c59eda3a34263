"""DC optimal power flow, switching shadow prices and infeasibility certificates.

Variable order in every LP built here is ``[p (generators) | theta (buses) |
f (branches)]``. The balance row of bus ``i`` is written as net export::

    sum_{l out of i} f_l - sum_{l into i} f_l - sum_{g at i} p_g = -d_i

so its dual ``pi_i`` is the objective sensitivity to an extra unit injected
at ``i`` (the negated locational price). With that orientation the switching
shadow price ``(pi_i - pi_j) * f_ij`` is the first-order cost change of
taking branch ``(i, j)`` out of service: negative values flag branches whose
removal is expected to lower cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .grid import Network
from .lp import LpProblem, NumericalFailure, Status, solve_lp

MIS_THRESHOLD = 1e-7


@dataclass(frozen=True, eq=False)
class OpfSolution:
    p: np.ndarray
    theta: np.ndarray
    f: np.ndarray
    pi: np.ndarray
    objective: float
    removed: frozenset[int]
    bus_ids: tuple[int, ...]

    def angle(self, bus: int) -> float:
        return float(self.theta[self.bus_ids.index(bus)])

    def angle_diff(self, i: int, j: int) -> float:
        return self.angle(i) - self.angle(j)

    @property
    def lmp(self) -> np.ndarray:
        return -self.pi

    def to_json(self) -> str:
        return json.dumps({
            "objective": self.objective,
            "removed": sorted(self.removed),
            "bus_ids": list(self.bus_ids),
            "p": self.p.tolist(), "theta": self.theta.tolist(),
            "f": self.f.tolist(), "pi": self.pi.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "OpfSolution":
        d = json.loads(text)
        return cls(np.array(d["p"]), np.array(d["theta"]), np.array(d["f"]), np.array(d["pi"]),
                   d["objective"], frozenset(d["removed"]), tuple(d["bus_ids"]))


@dataclass(frozen=True, eq=False)
class MisCertificate:
    y: np.ndarray
    u: np.ndarray
    e_mis: tuple[int, ...]
    residuals: tuple[float, float, float]
    removed: frozenset[int]


class _Layout:
    """Column indices for the [p | theta | f] variable vector."""

    def __init__(self, net: Network):
        self.ng, self.nb, self.nl = len(net.generators), net.n_bus, net.n_branch
        self.p0, self.t0, self.f0 = 0, self.ng, self.ng + self.nb
        self.n = self.ng + self.nb + self.nl


def _incidence(net: Network) -> sp.csr_matrix:
    """Node-arc incidence: +1 at the from-bus, -1 at the to-bus."""
    rows, cols, vals = [], [], []
    for k, br in enumerate(net.branches):
        rows += [net.bus_index[br.from_bus], net.bus_index[br.to_bus]]
        cols += [k, k]
        vals += [1.0, -1.0]
    return sp.csr_matrix((vals, (rows, cols)), shape=(net.n_bus, net.n_branch))


def _gen_map(net: Network) -> sp.csr_matrix:
    rows = [net.bus_index[g.bus] for g in net.generators]
    return sp.csr_matrix((np.ones(len(rows)), (rows, range(len(rows)))),
                         shape=(net.n_bus, len(net.generators)))


def _balance_rows(net: Network, lay: _Layout) -> tuple[sp.csr_matrix, np.ndarray]:
    A = sp.hstack([-_gen_map(net), sp.csr_matrix((net.n_bus, lay.nb)), _incidence(net)])
    return A.tocsr(), -net.demand


def _kirchhoff_rows(net: Network, lay: _Layout, active: list[int]) -> sp.csr_matrix:
    """Rows ``B_l theta_from - B_l theta_to - f_l = 0`` for the active branches."""
    rows, cols, vals = [], [], []
    for r, k in enumerate(active):
        br = net.branches[k]
        rows += [r, r, r]
        cols += [lay.t0 + net.bus_index[br.from_bus], lay.t0 + net.bus_index[br.to_bus], lay.f0 + k]
        vals += [br.susceptance, -br.susceptance, -1.0]
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(active), lay.n))


def reference_buses(net: Network, removed: Iterable[int] = ()) -> list[int]:
    """One angle reference per island: lowest-id generator bus, else lowest id."""
    refs = []
    for comp in net.components(removed):
        gens = [b for b in comp if net.is_generator(b)]
        refs.append(min(gens) if gens else comp[0])
    return refs


def _positions(net: Network, removed: Iterable[int]) -> tuple[set[int], list[int]]:
    removed = set(removed)
    unknown = removed - set(net.branch_by_id)
    if unknown:
        raise KeyError(f"unknown branch ids {sorted(unknown)}")
    pos = {br.id: k for k, br in enumerate(net.branches)}
    off = {pos[b] for b in removed}
    return off, [k for k in range(net.n_branch) if k not in off]


def build_opf_lp(net: Network, removed: Iterable[int] = ()) -> LpProblem:
    """DC-OPF LP with ``removed`` branches' Kirchhoff rows dropped and flows fixed at 0."""
    removed = frozenset(removed)
    lay = _Layout(net)
    off, active = _positions(net, removed)
    A_bal, b_bal = _balance_rows(net, lay)
    A_kcl = _kirchhoff_rows(net, lay, active)
    c = np.zeros(lay.n)
    c[:lay.ng] = [g.cost for g in net.generators]
    lower = np.full(lay.n, -np.inf)
    upper = np.full(lay.n, np.inf)
    lower[:lay.ng] = [g.p_min for g in net.generators]
    upper[:lay.ng] = [g.p_max for g in net.generators]
    for ref in reference_buses(net, removed):
        lower[lay.t0 + net.bus_index[ref]] = upper[lay.t0 + net.bus_index[ref]] = 0.0
    cap = np.array([br.capacity for br in net.branches])
    cap[list(off)] = 0.0
    lower[lay.f0:] = -cap
    upper[lay.f0:] = cap
    A_eq = sp.vstack([A_bal, A_kcl]).tocsr()
    b_eq = np.concatenate([b_bal, np.zeros(len(active))])
    labels = [("balance", b.id) for b in net.buses]
    labels += [("kirchhoff", net.branches[k].id) for k in active]
    return LpProblem.build(c, A_eq, b_eq, None, None, lower, upper, eq_labels=labels)


def solve_dcopf(net: Network, removed: Iterable[int] = ()) -> OpfSolution | None:
    """Optimal dispatch with ``removed`` switched off; ``None`` when infeasible."""
    removed = frozenset(removed)
    lp = build_opf_lp(net, removed)
    sol = solve_lp(lp)
    if sol.status is Status.INFEASIBLE:
        return None
    if sol.status is not Status.OPTIMAL:
        raise NumericalFailure(f"DC-OPF returned {sol.status.value}")
    lay = _Layout(net)
    return OpfSolution(
        p=sol.x[:lay.ng].copy(),
        theta=sol.x[lay.t0:lay.f0].copy(),
        f=sol.x[lay.f0:].copy(),
        pi=sol.u[:net.n_bus].copy(),
        objective=sol.objective,
        removed=removed,
        bus_ids=tuple(b.id for b in net.buses),
    )


def shadow_prices(net: Network, sol: OpfSolution) -> dict[int, float]:
    """Switching shadow price ``(pi_i - pi_j) * f_ij`` of each in-service branch."""
    out = {}
    for k, br in enumerate(net.branches):
        if br.id in sol.removed:
            continue
        i, j = net.bus_index[br.from_bus], net.bus_index[br.to_bus]
        out[br.id] = float((sol.pi[i] - sol.pi[j]) * sol.f[k])
    return out


def reformulation_alpha(net: Network, sol: OpfSolution) -> dict[int, float]:
    """Switching duals read directly off the on/off reformulation.

    The status ``x_l`` becomes a variable held by the row ``1 - x_l = 0``;
    Kirchhoff rows ``f = B x (theta_i - theta_j)`` are linearised at the
    solution point, which leaves the KKT multipliers unchanged. Returns the
    dual of each status row.
    """
    lay = _Layout(net)
    off, active = _positions(net, sol.removed)
    nx = len(active)
    n = lay.n + nx
    A_bal, b_bal = _balance_rows(net, lay)
    A_bal = sp.hstack([A_bal, sp.csr_matrix((net.n_bus, nx))])
    kcl = _kirchhoff_rows(net, lay, active).tolil()
    kcl.resize(nx, n)
    status_rows = sp.lil_matrix((nx, n))
    ge = sp.lil_matrix((2 * nx, n))
    ge_rhs = np.zeros(2 * nx)
    for r, k in enumerate(active):
        br = net.branches[k]
        dtheta = sol.theta[net.bus_index[br.from_bus]] - sol.theta[net.bus_index[br.to_bus]]
        # B x dtheta - f = 0 linearised around x = 1 (rhs uses the x = 1 expansion point)
        kcl[r, lay.n + r] = br.susceptance * dtheta
        status_rows[r, lay.n + r] = -1.0
        ge[2 * r, lay.n + r] = br.capacity
        ge[2 * r, lay.f0 + k] = -1.0
        ge[2 * r + 1, lay.n + r] = br.capacity
        ge[2 * r + 1, lay.f0 + k] = 1.0
    kcl_rhs = np.array([
        net.branches[k].susceptance * (sol.theta[net.bus_index[net.branches[k].from_bus]]
                                       - sol.theta[net.bus_index[net.branches[k].to_bus]])
        for k in active
    ])
    A_eq = sp.vstack([A_bal, kcl.tocsr(), status_rows.tocsr()]).tocsr()
    b_eq = np.concatenate([b_bal, kcl_rhs, -np.ones(nx)])
    c = np.zeros(n)
    c[:lay.ng] = [g.cost for g in net.generators]
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[:lay.ng] = [g.p_min for g in net.generators]
    upper[:lay.ng] = [g.p_max for g in net.generators]
    for ref in reference_buses(net, sol.removed):
        lower[lay.t0 + net.bus_index[ref]] = upper[lay.t0 + net.bus_index[ref]] = 0.0
    for k in off:
        lower[lay.f0 + k] = upper[lay.f0 + k] = 0.0
    lp = LpProblem.build(c, A_eq, b_eq, ge.tocsr(), ge_rhs, lower, upper)
    res = solve_lp(lp)
    if not res.optimal:
        raise NumericalFailure("reformulation LP did not solve to optimality")
    start = net.n_bus + nx
    return {net.branches[k].id: float(res.u[start + r]) for r, k in enumerate(active)}


def compact_system(net: Network, removed: Iterable[int] = ()):
    """Feasibility system ``{x : A x = b, H x >= g}`` of the reduced DC-OPF.

    Removed branches are eliminated; angles are free. Returns ``(A, b, H, g,
    eq_labels, ge_labels)``.
    """
    off, active = _positions(net, removed)
    keep_f = active
    lay = _Layout(net)
    cols = list(range(lay.f0)) + [lay.f0 + k for k in keep_f]
    A_bal, b_bal = _balance_rows(net, lay)
    A_kcl = _kirchhoff_rows(net, lay, active)
    A = sp.vstack([A_bal, A_kcl]).tocsr()[:, cols]
    b = np.concatenate([b_bal, np.zeros(len(active))])
    eq_labels = [("balance", bb.id) for bb in net.buses]
    eq_labels += [("kirchhoff", net.branches[k].id) for k in active]

    nf, ng = len(keep_f), lay.ng
    ncols = len(cols)
    f_cols = sp.hstack([sp.csr_matrix((nf, lay.f0)), sp.identity(nf)])
    p_cols = sp.hstack([sp.identity(ng), sp.csr_matrix((ng, ncols - ng))])
    H = sp.vstack([f_cols, -f_cols, p_cols, -p_cols]).tocsr()
    cap = np.array([net.branches[k].capacity for k in keep_f])
    g = np.concatenate([-cap, -cap, [gg.p_min for gg in net.generators],
                        [-gg.p_max for gg in net.generators]])
    ge_labels = [("flow_bound", net.branches[k].id, "lo") for k in keep_f]
    ge_labels += [("flow_bound", net.branches[k].id, "hi") for k in keep_f]
    ge_labels += [("gen_bound", k, "lo") for k in range(ng)]
    ge_labels += [("gen_bound", k, "hi") for k in range(ng)]
    return A, b, H, g, eq_labels, ge_labels


def dual_mis(net: Network, removed: Iterable[int] = ()) -> MisCertificate:
    """Vertex of the normalised Farkas polyhedron minimising ``sum(y)``.

    Branches whose Kirchhoff-row multiplier is non-zero form ``e_mis``: at
    least one of them must be switched off to restore feasibility. When
    several vertices tie, the one reached by the deterministic simplex is
    returned, so ``e_mis`` is one such subsystem among possibly many.
    """
    removed = frozenset(removed)
    if solve_dcopf(net, removed) is not None:
        raise ValueError("dual_mis requires an infeasible reduced DC-OPF")
    A, b, H, g, eq_labels, _ = compact_system(net, removed)
    ny, nu = H.shape[0], A.shape[0]
    # variables [y | u]; rows H'y + A'u = 0 and g'y + b'u = 1
    M = sp.vstack([sp.hstack([H.T, A.T]),
                   sp.csr_matrix(np.concatenate([g, b])[None, :])]).tocsr()
    rhs = np.zeros(M.shape[0])
    rhs[-1] = 1.0
    c = np.concatenate([np.ones(ny), np.zeros(nu)])
    lower = np.concatenate([np.zeros(ny), np.full(nu, -np.inf)])
    lp = LpProblem.build(c, M, rhs, None, None, lower, None)
    res = solve_lp(lp)
    if not res.optimal:
        raise NumericalFailure(f"dual MIS LP returned {res.status.value}")
    y, u = res.x[:ny], res.x[ny:]
    e_mis = tuple(sorted(
        lab[1] for lab, val in zip(eq_labels, u)
        if lab[0] == "kirchhoff" and abs(val) > MIS_THRESHOLD
    ))
    residuals = (
        float(np.max(np.abs(H.T @ y + A.T @ u), initial=0.0)),
        float(abs(g @ y + b @ u - 1.0)),
        float(max(0.0, -np.min(y, initial=0.0))),
    )
    return MisCertificate(y, u, e_mis, residuals, removed)
