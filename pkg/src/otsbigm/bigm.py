"""Big-M parameters for the switched Kirchhoff rows.

Three methods are provided: the longest weighted path bound (always valid), the
k-shortest-path heuristic driven by shadow prices and infeasibility certificates,
and a randomised neighbourhood simulation. All values are in per-unit on the
network base, like every other flow quantity in the package.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .grid import Network
from .lp import LpProblem, Status, solve_lp
from .opf import build_opf_lp, dual_mis, shadow_prices, solve_dcopf
from .paths import MTZ_TIME_LIMIT, hop_neighborhood, k_shortest_paths, longest_path

RNG_NAME = "numpy.PCG64/SeedSequence(seed, branch, iteration)"
M_FLOOR = 1e-6


@dataclass(frozen=True)
class KspParams:
    k_max: int = 5
    e_max: int = 3
    l: int = 1
    # "sensitivity" ranks by the cost change of switching a branch off; "lmp" negates
    # it, i.e. ranks by (LMP_i - LMP_j) f_ij
    price_convention: str = "sensitivity"

    def __post_init__(self):
        if self.k_max < 1 or self.e_max < 1 or self.l < 0:
            raise ValueError("need k_max >= 1, e_max >= 1 and l >= 0")
        if self.price_convention not in ("sensitivity", "lmp"):
            raise ValueError("price_convention must be 'sensitivity' or 'lmp'")


@dataclass(frozen=True)
class KnnParams:
    k: int = 2
    h: float = 0.2
    s: float = 10.0
    r: int = 30
    seed: int = 0
    remove_target: bool = True
    rounding: str = "floor"

    def __post_init__(self):
        if not 0 < self.h < 1:
            raise ValueError("h must lie in (0, 1)")
        if self.s < 1 or self.r < 1 or self.k < 1:
            raise ValueError("need s >= 1, r >= 1 and k >= 1")
        if self.rounding not in ("floor", "ceil"):
            raise ValueError("rounding must be 'floor' or 'ceil'")

    def sample_size(self, n: int) -> int:
        raw = self.h * n
        size = math.ceil(raw - 1e-12) if self.rounding == "ceil" else math.floor(raw + 1e-12)
        return min(n, max(1, size))


@dataclass
class Provenance:
    """How one branch's value was produced; enough to replay the kSP decisions."""

    method: str
    path_index: int | None = None
    path_edges: tuple[int, ...] = ()
    fallback_used: bool = False
    certified: bool = True
    removed: tuple[int, ...] = ()
    solves: list[tuple[int, tuple[int, ...], bool]] = field(default_factory=list)
    samples: int = 0
    infeasible_samples: int = 0
    delta_theta: float | None = None


@dataclass
class BigMVector:
    M: dict[int, float]
    provenance: dict[int, Provenance]
    method: str

    def __getitem__(self, branch_id: int) -> float:
        return self.M[branch_id]

    def scaled(self, factor: float) -> "BigMVector":
        return BigMVector({b: m * factor for b, m in self.M.items()}, dict(self.provenance),
                          f"{self.method}*{factor:g}")

    def to_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "M": {str(b): m for b, m in sorted(self.M.items())},
            "provenance": {str(b): asdict(p) for b, p in sorted(self.provenance.items())},
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BigMVector":
        d = json.loads(text)
        prov = {}
        for b, p in d.get("provenance", {}).items():
            p["path_edges"] = tuple(p["path_edges"])
            p["removed"] = tuple(p["removed"])
            p["solves"] = [(k, tuple(r), ok) for k, r, ok in p["solves"]]
            prov[int(b)] = Provenance(**p)
        return cls({int(b): float(m) for b, m in d["M"].items()}, prov, d["method"])

    def to_csv(self, net: Network | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["branch", "from", "to", "M", "method", "path_index", "fallback_used",
                    "certified", "removed", "delta_theta"])
        for b in sorted(self.M):
            p = self.provenance.get(b, Provenance(self.method))
            ends = net.branch_by_id[b].ends if net is not None else ("", "")
            w.writerow([b, *ends, repr(self.M[b]), p.method,
                        "" if p.path_index is None else p.path_index, int(p.fallback_used),
                        int(p.certified), " ".join(map(str, p.removed)),
                        "" if p.delta_theta is None else repr(p.delta_theta)])
        return buf.getvalue()


def _targets(net: Network, branches: Iterable[int] | None) -> list[int]:
    return sorted(net.switchable_ids if branches is None else branches)


# -- longest weighted path ------------------------------------------------------------------

def lwp_bigm(net: Network, strategy: str = "exhaustive", time_limit: float | None = MTZ_TIME_LIMIT,
             branches: Iterable[int] | None = None) -> BigMVector:
    """M_ij = B_ij times the weight of the longest elementary i-j path.

    A path from the MTZ model that is not certified within the time limit is
    replaced by the solver's upper bound so the value stays valid.
    """
    M, prov = {}, {}
    for b in _targets(net, branches):
        br = net.branch_by_id[b]
        path = longest_path(net, br.from_bus, br.to_bus, strategy, time_limit)
        w = path.weight if path.certified else path.bound
        M[b] = br.susceptance * w
        prov[b] = Provenance("lwp", path_edges=path.edges, certified=path.certified)
    return BigMVector(M, prov, "lwp")


def _lwp_lookup(net: Network, lwp: BigMVector | None, branches: list[int]) -> BigMVector:
    if lwp is not None and all(b in lwp.M for b in branches):
        return lwp
    return lwp_bigm(net, branches=branches)


# -- k shortest paths -----------------------------------------------------------------------

def _ranked(edges: Iterable[int], alpha: Mapping[int, float]) -> list[int]:
    return sorted(edges, key=lambda e: (alpha[e], e))


def ksp_branch(net: Network, branch_id: int, p: KspParams, lwp_value: float) -> tuple[float, Provenance]:
    """Run the k-shortest-path procedure for one branch on a fresh copy of the edge set."""
    br = net.branch_by_id[branch_id]
    switchable = set(net.switchable_ids)
    paths = k_shortest_paths(net, br.from_bus, br.to_bus, p.k_max + p.l)
    sign = 1.0 if p.price_convention == "sensitivity" else -1.0

    def prices(sol):
        return {e: sign * a for e, a in shadow_prices(net, sol).items()}

    base = solve_dcopf(net)
    if base is None:
        raise ValueError("OPF on the full network is infeasible")
    alpha = prices(base)
    removed: list[int] = []
    solves: list[tuple[int, tuple[int, ...], bool]] = []

    def attempt(k: int, extra: tuple[int, ...]) -> bool:
        nonlocal alpha
        trial = tuple(removed) + extra
        sol = solve_dcopf(net, trial)
        solves.append((k, trial, sol is not None))
        if sol is None:
            return False
        alpha = prices(sol)
        removed.extend(extra)
        return True

    k = 1
    while k < p.k_max:
        if k <= len(paths) and not set(paths[k - 1].edges) & set(removed):
            order = _ranked((e for e in paths[k - 1].edges if e in switchable), alpha)
            if any(attempt(k, (e,)) for e in order[:p.e_max]):
                k += 1
                continue
            if not order:
                break
            j1 = order[0]
            cert = dual_mis(net, tuple(removed) + (j1,))
            cands = _ranked((e for e in cert.e_mis if e in switchable and e != j1), alpha)
            if any(attempt(k, (j1, h)) for h in cands):
                k += 1
                continue
            break  # this path must stay in service
        k += 1

    out = k + p.l
    prov = Provenance("ksp", path_index=out, removed=tuple(removed), solves=solves)
    if out <= len(paths):
        prov.path_edges = paths[out - 1].edges
        return min(br.susceptance * paths[out - 1].weight, lwp_value), prov
    prov.fallback_used = True
    return lwp_value, prov


def ksp_bigm(net: Network, p: KspParams = KspParams(), lwp: BigMVector | None = None,
             branches: Iterable[int] | None = None) -> BigMVector:
    targets = _targets(net, branches)
    base = _lwp_lookup(net, lwp, targets)
    M, prov = {}, {}
    for b in targets:
        M[b], prov[b] = ksp_branch(net, b, p, base.M[b])
    return BigMVector(M, prov, "ksp")


def replay_ksp(net: Network, prov: Provenance) -> bool:
    """Re-solve every recorded OPF and check the outcomes and final removals agree."""
    for _, trial, feasible in prov.solves:
        if (solve_dcopf(net, trial) is not None) != feasible:
            return False
    last_ok = [trial for _, trial, ok in prov.solves if ok]
    return tuple(prov.removed) == (last_ok[-1] if last_ok else ())


# -- neighbourhood simulation ---------------------------------------------------------------

def knn_rng(seed: int, branch_id: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, branch_id, iteration]))


def knn_branch(net: Network, branch_id: int, p: KnnParams, lwp_value: float) -> tuple[float, Provenance]:
    br = net.branch_by_id[branch_id]
    switchable = set(net.switchable_ids)
    hood = sorted(e for e in hop_neighborhood(net, branch_id, p.k) if e in switchable)
    size = p.sample_size(len(hood)) if hood else 0
    base = (branch_id,) if p.remove_target else ()
    best, infeasible = 0.0, 0
    for it in range(p.r):
        pick = knn_rng(p.seed, branch_id, it).choice(len(hood), size=size, replace=False) \
            if size else []
        removed = base + tuple(hood[int(q)] for q in sorted(pick))
        same_island = any(br.from_bus in c and br.to_bus in c for c in net.components(removed))
        sol = solve_dcopf(net, removed) if same_island else None
        if sol is None:
            infeasible += 1
            continue
        best = max(best, abs(sol.angle(br.from_bus) - sol.angle(br.to_bus)))
    prov = Provenance("knn", samples=p.r, infeasible_samples=infeasible, delta_theta=best)
    if infeasible == p.r:
        prov.fallback_used = True
        return lwp_value, prov
    return max(M_FLOOR, min(p.s * best * br.susceptance, lwp_value)), prov


def knn_bigm(net: Network, p: KnnParams = KnnParams(), lwp: BigMVector | None = None,
             branches: Iterable[int] | None = None) -> BigMVector:
    targets = _targets(net, branches)
    base = _lwp_lookup(net, lwp, targets)
    M, prov = {}, {}
    for b in targets:
        M[b], prov[b] = knn_branch(net, b, p, base.M[b])
    return BigMVector(M, prov, "knn")


def compute_bigm(net: Network, method: str, ksp: KspParams = KspParams(),
                 knn: KnnParams = KnnParams(), lwp: BigMVector | None = None) -> BigMVector:
    if method == "lwp":
        return lwp if lwp is not None else lwp_bigm(net)
    if method == "ksp":
        return ksp_bigm(net, ksp, lwp)
    if method == "knn":
        return knn_bigm(net, knn, lwp)
    raise ValueError(f"unknown big-M method {method!r}")


# -- statistics and validation --------------------------------------------------------------

def ratio_stats(M: BigMVector, lwp: BigMVector) -> dict[str, float]:
    """max/avg/min/std of M/M_lwp over the branches both vectors cover."""
    ratios = [M.M[b] / lwp.M[b] for b in sorted(M.M) if b in lwp.M]
    if not ratios:
        raise ValueError("no common branches")
    return {
        "max_ratio": max(ratios),
        "avg_ratio": statistics.fmean(ratios),
        "min_ratio": min(ratios),
        "std_ratio": statistics.stdev(ratios) if len(ratios) > 1 else 0.0,
    }


MAX_ENUMERATED = 12


@dataclass(frozen=True)
class ValidationRow:
    branch: int
    M: float
    M_opt: float

    @property
    def ratio(self) -> float:
        return self.M / self.M_opt if self.M_opt > 0 else math.inf

    @property
    def flagged(self) -> bool:
        return self.M < self.M_opt - 1e-7 * max(1.0, self.M_opt)


def _angle_range(net: Network, removed: tuple[int, ...], branch_id: int) -> float:
    """max |theta_i - theta_j| over the OPF feasible region (cost ignored)."""
    base = build_opf_lp(net, removed)
    br = net.branch_by_id[branch_id]
    ng = len(net.generators)
    c = np.zeros(base.n)
    c[ng + net.bus_index[br.from_bus]] = 1.0
    c[ng + net.bus_index[br.to_bus]] = -1.0
    best = 0.0
    for sign in (1.0, -1.0):
        lp = LpProblem(sign * c, base.A_eq, base.b_eq, base.A_ge, base.g_ge, base.lower,
                       base.upper, base.eq_labels, base.ge_labels, base.var_labels)
        sol = solve_lp(lp)
        if sol.status is not Status.OPTIMAL:
            return math.nan
        best = max(best, -sol.objective)
    return best


def enumerate_m_opt(net: Network) -> dict[int, float]:
    """Largest B_ij |theta_i - theta_j| over connected, OPF-feasible topologies with (i,j) off."""
    sw = list(net.switchable_ids)
    if len(sw) > MAX_ENUMERATED:
        raise ValueError(f"{len(sw)} switchable branches; enumeration is limited to {MAX_ENUMERATED}")
    m_opt = {b: 0.0 for b in sw}
    for r in range(1, len(sw) + 1):
        for off in itertools.combinations(sw, r):
            if not net.is_connected(off) or solve_dcopf(net, off) is None:
                continue
            for b in off:
                span = _angle_range(net, off, b)
                m_opt[b] = max(m_opt[b], net.branch_by_id[b].susceptance * span)
    return m_opt


def validate_bigm(net: Network, M: BigMVector, m_opt: Mapping[int, float] | None = None
                  ) -> list[ValidationRow]:
    """Compare each M_ij with the enumerated smallest valid value; see ``ValidationRow.flagged``."""
    m_opt = enumerate_m_opt(net) if m_opt is None else m_opt
    missing = set(net.switchable_ids) - set(M.M)
    if missing:
        raise KeyError(f"no big-M value for branches {sorted(missing)}")
    return [ValidationRow(b, M.M[b], m_opt[b]) for b in sorted(net.switchable_ids)]
