"""Bounded-variable revised simplex with exact duals.

Problems are stated in the compact form::

    min  c'x   s.t.  A_eq x = b_eq,   A_ge x >= g_ge,   lower <= x <= upper

Dual sign convention: every row dual is the sensitivity of the optimal
objective to that row's right-hand side. Duals of ``>=`` rows are therefore
non-negative, and at optimality ``c = A_eq'u + A_ge'y + z`` where ``z`` holds
the reduced costs (variable-bound multipliers).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
STALL_LIMIT = 50
REFACTOR_EVERY = 40

_BASIC, _LOWER, _UPPER, _FREE = 0, 1, 2, 3


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class NumericalFailure(RuntimeError):
    """The simplex could not reach a trustworthy answer."""


def _as_csr(a, ncols: int) -> sp.csr_matrix:
    if a is None:
        return sp.csr_matrix((0, ncols))
    return sp.csr_matrix(a, dtype=float)


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ge: sp.csr_matrix
    g_ge: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    eq_labels: tuple = ()
    ge_labels: tuple = ()
    var_labels: tuple = ()

    @classmethod
    def build(cls, c, A_eq=None, b_eq=None, A_ge=None, g_ge=None, lower=None, upper=None,
              eq_labels=(), ge_labels=(), var_labels=()) -> "LpProblem":
        """Normalise inputs. Bounds default to ``x >= 0``."""
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        A_eq = _as_csr(A_eq, n)
        A_ge = _as_csr(A_ge, n)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        g_ge = np.zeros(0) if g_ge is None else np.asarray(g_ge, dtype=float).ravel()
        lower = np.zeros(n) if lower is None else np.broadcast_to(np.asarray(lower, float), (n,)).copy()
        upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), (n,)).copy()
        if A_eq.shape != (b_eq.size, n) or A_ge.shape != (g_ge.size, n):
            raise ValueError("inconsistent LP dimensions")
        if np.any(lower > upper):
            raise ValueError("lower bound above upper bound")
        for arr in (c, b_eq, g_ge, A_eq.data, A_ge.data):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")
        return cls(c, A_eq, b_eq, A_ge, g_ge, lower, upper, tuple(eq_labels), tuple(ge_labels),
                   tuple(var_labels))

    @property
    def n(self) -> int:
        return self.c.size

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LpProblem":
        return LpProblem(self.c, self.A_eq, self.b_eq, self.A_ge, self.g_ge, lower, upper,
                         self.eq_labels, self.ge_labels, self.var_labels)


@dataclass(frozen=True)
class KktReport:
    primal_inf: float
    dual_inf: float
    duality_gap: float

    def ok(self, tol: float = 1e-6) -> bool:
        return max(self.primal_inf, self.dual_inf, self.duality_gap) <= tol


@dataclass(frozen=True)
class Basis:
    """Column statuses of the internal (structural + slack + artificial) system."""

    basic: tuple[int, ...]
    status: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    u: np.ndarray | None = None
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    objective: float = math.nan
    residuals: KktReport | None = None
    iterations: int = 0
    basis: Basis | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Simplex:
    """Working state for one solve. Internal columns: [x | slacks | artificials]."""

    def __init__(self, p: LpProblem):
        self.p = p
        n, me, mi = p.n, p.A_eq.shape[0], p.A_ge.shape[0]
        self.n, self.me, self.mi = n, me, mi
        m = me + mi
        self.m = m
        A = np.zeros((m, n + mi + m))
        if me:
            A[:me, :n] = p.A_eq.toarray()
        if mi:
            A[me:, :n] = p.A_ge.toarray()
            A[me:, n:n + mi] = -np.eye(mi)
        A[:, n + mi:] = np.eye(m)
        self.A = A
        self.b = np.concatenate([p.b_eq, p.g_ge])
        self.ncol = n + mi + m
        self.art0 = n + mi
        self.lo = np.concatenate([p.lower, np.zeros(mi), np.zeros(m)])
        self.hi = np.concatenate([p.upper, np.full(mi, np.inf), np.full(m, np.inf)])
        self.x = np.zeros(self.ncol)
        self.status = np.full(self.ncol, _LOWER)
        self.basis = np.zeros(m, dtype=int)
        self.Binv = np.eye(m)
        self.iterations = 0
        scale = max(1.0, float(np.max(np.abs(p.c))) if n else 1.0)
        self.opt_tol = OPT_TOL * scale
        self.feas_tol = FEAS_TOL * max(1.0, float(np.max(np.abs(self.b))) if m else 1.0)

    # -- basis bookkeeping -------------------------------------------------

    def _nonbasic_value(self, j: int) -> float:
        st = self.status[j]
        if st == _LOWER:
            return self.lo[j]
        if st == _UPPER:
            return self.hi[j]
        return 0.0

    def _default_status(self, j: int) -> int:
        if np.isfinite(self.lo[j]):
            return _LOWER
        if np.isfinite(self.hi[j]):
            return _UPPER
        return _FREE

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis") from exc
        nb = self.status != _BASIC
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = self.Binv @ rhs

    def cold_start(self) -> None:
        m = self.m
        self.status[:] = [self._default_status(j) for j in range(self.ncol)]
        self.x[:] = [self._nonbasic_value(j) for j in range(self.ncol)]
        art = slice(self.art0, self.ncol)
        self.x[art] = 0.0
        r = self.b - self.A[:, :self.art0] @ self.x[:self.art0]
        for i in range(m):
            j = self.art0 + i
            slack = self.n + i - self.me
            if i >= self.me and -r[i] >= 0:
                # slack s = Hx - g is already non-negative: use it as the basic column
                self.basis[i] = slack
                self.status[slack] = _BASIC
                self.x[slack] = -r[i]
                self.status[j] = _LOWER
                self.hi[j] = 0.0
                continue
            sign = 1.0 if r[i] >= 0 else -1.0
            self.A[i, j] = sign
            self.basis[i] = j
            self.status[j] = _BASIC
            self.x[j] = abs(r[i])
        self.Binv = np.diag(1.0 / np.diag(self.A[:, self.basis]))

    # -- primal simplex ----------------------------------------------------

    def primal(self, cost: np.ndarray, max_iter: int) -> Status:
        bland = False
        stall = 0
        since_refactor = 0
        for _ in range(max_iter):
            self.iterations += 1
            lam = cost[self.basis] @ self.Binv
            d = cost - lam @ self.A
            q, direction = self._price(d, bland)
            if q < 0:
                return Status.OPTIMAL
            alpha = self.Binv @ self.A[:, q]
            step, r, to_upper = self._ratio(alpha, q, direction, bland)
            if step is None:
                return Status.UNBOUNDED
            stall = stall + 1 if step <= 1e-12 else 0
            if stall > STALL_LIMIT and not bland:
                log.debug("simplex stalled for %d pivots, switching to Bland's rule", stall)
                bland = True
            self.x[self.basis] -= direction * step * alpha
            self.x[q] += direction * step
            if r < 0:
                self.status[q] = _UPPER if direction > 0 else _LOWER
                self.x[q] = self._nonbasic_value(q)
                continue
            self._pivot(r, q, alpha, to_upper)
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0
        raise NumericalFailure("iteration limit reached after anti-cycling fallback")

    def _price(self, d: np.ndarray, bland: bool) -> tuple[int, float]:
        st = self.status
        tol = self.opt_tol
        fixed = self.lo == self.hi
        inc = ((st == _LOWER) | (st == _FREE)) & (d < -tol) & ~fixed
        dec = ((st == _UPPER) | (st == _FREE)) & (d > tol) & ~fixed
        cand = np.flatnonzero(inc | dec)
        if cand.size == 0:
            return -1, 0.0
        if bland:
            q = int(cand[0])
        else:
            q = int(cand[np.argmax(np.abs(d[cand]))])
        return q, (1.0 if inc[q] else -1.0)

    def _ratio(self, alpha: np.ndarray, q: int, direction: float, bland: bool):
        rate = -direction * alpha
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        limits = np.full(self.m, np.inf)
        dec = rate < -PIVOT_TOL
        inc = rate > PIVOT_TOL
        with np.errstate(invalid="ignore"):
            limits[dec] = (xb[dec] - lo[dec]) / -rate[dec]
            limits[inc] = (hi[inc] - xb[inc]) / rate[inc]
        limits = np.where(np.isnan(limits), np.inf, np.maximum(limits, 0.0))
        own = self.hi[q] - self.lo[q]
        best = float(np.min(limits)) if self.m else np.inf
        if not np.isfinite(best) and not np.isfinite(own):
            return None, -1, False
        if own <= best:
            return own, -1, False
        ties = np.flatnonzero(limits <= best + 1e-12)
        if bland:
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(alpha[ties]))])
        return best, r, bool(inc[r])

    def _pivot(self, r: int, q: int, alpha: np.ndarray, to_upper: bool) -> None:
        leave = self.basis[r]
        self.status[leave] = _UPPER if to_upper else _LOWER
        if not np.isfinite(self.lo[leave]) and not np.isfinite(self.hi[leave]):
            self.status[leave] = _FREE
        self.x[leave] = self._nonbasic_value(leave)
        piv = alpha[r]
        row = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.status[q] = _BASIC

    # -- dual simplex (warm starts) ----------------------------------------

    def dual(self, cost: np.ndarray, max_iter: int) -> Status | None:
        """Restore primal feasibility from a dual-feasible basis.

        Returns None when the basis is not dual feasible or the run stalls,
        so the caller can fall back to a cold start.
        """
        for _ in range(max_iter):
            self.iterations += 1
            xb = self.x[self.basis]
            lo = self.lo[self.basis]
            hi = self.hi[self.basis]
            viol = np.maximum(lo - xb, xb - hi)
            r = int(np.argmax(viol)) if self.m else -1
            if r < 0 or viol[r] <= self.feas_tol:
                return Status.OPTIMAL
            below = xb[r] < lo[r]
            target = lo[r] if below else hi[r]
            lam = cost[self.basis] @ self.Binv
            d = cost - lam @ self.A
            row = self.Binv[r] @ self.A
            st = self.status
            fixed = self.lo == self.hi
            if below:
                ok = (((st == _LOWER) | (st == _FREE)) & (row < -PIVOT_TOL)) | \
                     (((st == _UPPER) | (st == _FREE)) & (row > PIVOT_TOL))
            else:
                ok = (((st == _LOWER) | (st == _FREE)) & (row > PIVOT_TOL)) | \
                     (((st == _UPPER) | (st == _FREE)) & (row < -PIVOT_TOL))
            ok &= (st != _BASIC) & ~fixed
            cand = np.flatnonzero(ok)
            if cand.size == 0:
                return Status.INFEASIBLE
            ratios = np.abs(d[cand]) / np.abs(row[cand])
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            alpha = self.Binv @ self.A[:, q]
            dq = (xb[r] - target) / alpha[r]
            self.x[self.basis] -= alpha * dq
            self.x[q] += dq
            self._pivot(r, q, alpha, not below)
        return None

    def dual_feasible(self, cost: np.ndarray) -> bool:
        lam = cost[self.basis] @ self.Binv
        d = cost - lam @ self.A
        st = self.status
        tol = self.opt_tol * 10
        fixed = self.lo == self.hi
        bad = (((st == _LOWER) & (d < -tol)) | ((st == _UPPER) & (d > tol)) |
               ((st == _FREE) & (np.abs(d) > tol))) & ~fixed
        return not bool(np.any(bad))

    # -- driver ------------------------------------------------------------

    def drive_out_artificials(self) -> None:
        for r in range(self.m):
            j = self.basis[r]
            if j < self.art0:
                continue
            row = self.Binv[r] @ self.A[:, :self.art0]
            row[self.status[:self.art0] == _BASIC] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size == 0:
                continue  # redundant row; artificial stays basic at zero
            q = int(cand[np.argmax(np.abs(row[cand]))])
            alpha = self.Binv @ self.A[:, q]
            self._pivot(r, q, alpha, False)
        self.hi[self.art0:] = 0.0
        self.refactor()

    def solve(self, warm: Basis | None) -> Status:
        max_iter = 50 * (self.m + self.ncol) + 1000
        cost = np.zeros(self.ncol)
        cost[:self.n] = self.p.c
        if warm is not None and self._load(warm):
            st = self.dual(cost, max_iter)
            if st is Status.INFEASIBLE:
                return st
            if st is Status.OPTIMAL:
                return self.primal(cost, max_iter)
            self.__init__(self.p)
        self.cold_start()
        phase1 = np.zeros(self.ncol)
        phase1[self.art0:] = 1.0
        self.primal(phase1, max_iter)
        self.refactor()
        infeas = float(np.sum(np.abs(self.x[self.art0:])))
        if infeas > self.feas_tol:
            return Status.INFEASIBLE
        self.drive_out_artificials()
        return self.primal(cost, max_iter)

    def _load(self, warm: Basis) -> bool:
        if len(warm.basic) != self.m or len(warm.status) != self.ncol:
            return False
        self.hi[self.art0:] = 0.0
        self.basis = np.array(warm.basic, dtype=int)
        self.status = np.array(warm.status, dtype=int)
        for j in np.flatnonzero(self.status == _UPPER):
            if not np.isfinite(self.hi[j]):
                self.status[j] = self._default_status(j)
        for j in np.flatnonzero(self.status == _LOWER):
            if not np.isfinite(self.lo[j]):
                self.status[j] = self._default_status(j)
        nb = np.flatnonzero(self.status != _BASIC)
        self.x[nb] = [self._nonbasic_value(j) for j in nb]
        try:
            self.refactor()
        except NumericalFailure:
            return False
        cost = np.zeros(self.ncol)
        cost[:self.n] = self.p.c
        return self.dual_feasible(cost)


def solve_lp(p: LpProblem, warm_start: Basis | None = None) -> LpSolution:
    """Solve ``p``; returns status, primal point and row/bound duals."""
    if p.A_eq.shape[0] + p.A_ge.shape[0] == 0:
        return _solve_bounds_only(p)
    s = _Simplex(p)
    status = s.solve(warm_start)
    if status is not Status.OPTIMAL:
        return LpSolution(status, iterations=s.iterations)
    s.refactor()
    cost = np.zeros(s.ncol)
    cost[:s.n] = p.c
    lam = cost[s.basis] @ s.Binv
    x = s.x[:s.n].copy()
    # snap nonbasic structurals exactly onto their bounds
    z = p.c - lam @ s.A[:, :s.n]
    z[s.status[:s.n] == _BASIC] = 0.0
    sol = LpSolution(
        Status.OPTIMAL, x, lam[:s.me].copy(), lam[s.me:].copy(), z,
        float(p.c @ x), None, s.iterations, Basis(tuple(int(v) for v in s.basis),
                                                  tuple(int(v) for v in s.status)),
    )
    report = check_kkt(p, sol)
    if report.primal_inf > 1e3 * s.feas_tol:
        raise NumericalFailure(f"primal residual {report.primal_inf:.2e} after solve")
    return LpSolution(sol.status, sol.x, sol.u, sol.y, sol.z, sol.objective, report,
                      sol.iterations, sol.basis)


def _solve_bounds_only(p: LpProblem) -> LpSolution:
    x = np.where(p.c >= 0, p.lower, p.upper)
    if np.any(~np.isfinite(x) & (p.c != 0)):
        return LpSolution(Status.UNBOUNDED)
    x = np.where(np.isfinite(x), x, np.where(np.isfinite(p.lower), p.lower,
                                             np.where(np.isfinite(p.upper), p.upper, 0.0)))
    sol = LpSolution(Status.OPTIMAL, x, np.zeros(0), np.zeros(0), p.c.copy(), float(p.c @ x))
    return LpSolution(sol.status, sol.x, sol.u, sol.y, sol.z, sol.objective, check_kkt(p, sol))


def check_kkt(p: LpProblem, s: LpSolution) -> KktReport:
    """Max primal violation, max dual violation and |primal - dual objective|."""
    x, u, y = s.x, s.u, s.y
    z = s.z if s.z is not None else p.c - p.A_eq.T @ u - p.A_ge.T @ y
    viol = [0.0]
    if p.A_eq.shape[0]:
        viol.append(float(np.max(np.abs(p.A_eq @ x - p.b_eq))))
    if p.A_ge.shape[0]:
        viol.append(float(np.max(np.maximum(p.g_ge - p.A_ge @ x, 0.0))))
    viol.append(float(np.max(np.maximum(p.lower - x, 0.0), initial=0.0)))
    viol.append(float(np.max(np.maximum(x - p.upper, 0.0), initial=0.0)))

    stat = p.c - p.A_eq.T @ u - p.A_ge.T @ y - z
    zl = np.maximum(z, 0.0)
    zu = np.maximum(-z, 0.0)
    dual = [float(np.max(np.abs(stat), initial=0.0)),
            float(np.max(np.maximum(-y, 0.0), initial=0.0)),
            float(np.max(zl[~np.isfinite(p.lower)], initial=0.0)),
            float(np.max(zu[~np.isfinite(p.upper)], initial=0.0))]
    lo = np.where(np.isfinite(p.lower), p.lower, 0.0)
    hi = np.where(np.isfinite(p.upper), p.upper, 0.0)
    dual_obj = p.b_eq @ u + p.g_ge @ y + zl @ lo - zu @ hi
    return KktReport(max(viol), max(dual), abs(float(p.c @ x) - float(dual_obj)))


def write_mps(p: LpProblem, name: str = "LP") -> str:
    """Fixed-format MPS text, for cross-checking with external solvers."""
    rows = [f"E{i}" for i in range(p.A_eq.shape[0])] + [f"G{i}" for i in range(p.A_ge.shape[0])]
    cols = [f"X{j}" for j in range(p.n)]
    A = sp.vstack([p.A_eq, p.A_ge]).tocsc()
    rhs = np.concatenate([p.b_eq, p.g_ge])
    out = [f"NAME          {name}", "ROWS", " N  OBJ"]
    out += [f" {'E' if r[0] == 'E' else 'G'}  {r}" for r in rows]
    out.append("COLUMNS")
    for j, cname in enumerate(cols):
        entries = [("OBJ", p.c[j])] if p.c[j] != 0 else []
        lo, hi = A.indptr[j], A.indptr[j + 1]
        entries += [(rows[i], v) for i, v in zip(A.indices[lo:hi], A.data[lo:hi])]
        for rname, v in entries:
            out.append(f"    {cname:<8}  {rname:<8}  {v:>12.6g}")
    out.append("RHS")
    for rname, v in zip(rows, rhs):
        if v != 0:
            out.append(f"    RHS       {rname:<8}  {v:>12.6g}")
    out.append("BOUNDS")
    for j, cname in enumerate(cols):
        lo, hi = p.lower[j], p.upper[j]
        if lo == hi:
            out.append(f" FX BND       {cname:<8}  {lo:>12.6g}")
            continue
        if not np.isfinite(lo) and not np.isfinite(hi):
            out.append(f" FR BND       {cname:<8}")
            continue
        if not np.isfinite(lo):
            out.append(f" MI BND       {cname:<8}")
        elif lo != 0:
            out.append(f" LO BND       {cname:<8}  {lo:>12.6g}")
        if np.isfinite(hi):
            out.append(f" UP BND       {cname:<8}  {hi:>12.6g}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def stack_rows(blocks: Sequence[sp.spmatrix], ncols: int) -> sp.csr_matrix:
    blocks = [b for b in blocks if b.shape[0]]
    if not blocks:
        return sp.csr_matrix((0, ncols))
    return sp.vstack(blocks).tocsr()
