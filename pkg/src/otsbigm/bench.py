"""Experiment harness: perturbed-load instances, method comparison and summary tables."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bigm import BigMVector, KnnParams, KspParams, compute_bigm, lwp_bigm, ratio_stats
from .grid import Network, apply_scenario, load_case, parse_network, random_scenario
from .milp import DEFAULT_GAP
from .ots import DEFAULT_L, solve_ots

log = logging.getLogger(__name__)

NON_NEG_THRESHOLD = 1e-5  # 0.001 %
MIN_TIME = 1e-3
CSV_COLUMNS = ["instance", "method", "z", "rel_gap", "time_s", "bigm_time_s", "solved", "opt_gap",
               "max_ratio", "avg_ratio", "min_ratio", "std_ratio", "error"]


@dataclass(frozen=True)
class ExperimentSpec:
    case: str = "ieee14"
    class_factor: float = 1.0
    instance_count: int = 20
    methods: tuple[str, ...] = ("lwp", "ksp", "knn")
    ksp: KspParams = KspParams()
    knn: KnnParams = KnnParams()
    L: int = DEFAULT_L
    time_limit: float = 600.0
    gap_tol: float = DEFAULT_GAP
    seed: int = 0
    low: float = 0.95
    high: float = 1.05

    def network(self) -> Network:
        path = Path(self.case)
        if path.suffix in (".json", ".m") and path.exists():
            fmt = "json" if path.suffix == ".json" else "matpower"
            return parse_network(path.read_text(), fmt, name=path.stem)
        return load_case(self.case)

    def instance_seed(self, index: int) -> int:
        """Seed of instance ``index``, independent of how many instances run."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(index,))
        return int(ss.generate_state(1)[0])

    def instance(self, base: Network, index: int) -> Network:
        sc = random_scenario(base, self.class_factor, self.instance_seed(index), self.low, self.high)
        return apply_scenario(base, sc)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        d = json.loads(text)
        if "ksp" in d:
            d["ksp"] = KspParams(**d["ksp"])
        if "knn" in d:
            d["knn"] = KnnParams(**d["knn"])
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)


@dataclass
class MetricsRow:
    instance: int
    method: str
    z: float
    rel_gap: float
    time_s: float
    bigm_time_s: float
    solved: bool
    opt_gap: float
    max_ratio: float = math.nan
    avg_ratio: float = math.nan
    min_ratio: float = math.nan
    std_ratio: float = math.nan
    error: str = ""


@dataclass(frozen=True)
class GapSummary:
    n: int
    max_gap: float
    min_gap: float
    avg_gap: float
    std_gap: float
    non_neg: int


@dataclass(frozen=True)
class Speedup:
    ratio_of_means: float
    geometric_mean: float


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list[MetricsRow]
    summary: dict[str, dict] = field(default_factory=dict)


def rel_gap(z_method: float, z_base: float) -> float:
    return (z_method - z_base) / z_base


def _solve_row(net: Network, index: int, method: str, M: BigMVector, bigm_time: float,
               lwp: BigMVector, z_base: float | None, spec: ExperimentSpec) -> MetricsRow:
    t0 = time.perf_counter()
    res = solve_ots(net, M, spec.L, spec.time_limit, spec.gap_tol)
    elapsed = time.perf_counter() - t0
    if res is None:
        return MetricsRow(index, method, math.nan, math.nan, elapsed, bigm_time, False, math.nan,
                          error="infeasible")
    base = res.objective if z_base is None else z_base
    stats = ratio_stats(M, lwp)
    return MetricsRow(index, method, res.objective, rel_gap(res.objective, base), elapsed,
                      bigm_time, res.opt_gap <= spec.gap_tol, res.opt_gap, **stats)


def run_instance(spec: ExperimentSpec, index: int, base: Network | None = None) -> list[MetricsRow]:
    """All methods on one instance; the LWP run is the reference for rel_gap."""
    base = spec.network() if base is None else base
    rows: list[MetricsRow] = []
    try:
        net = spec.instance(base, index)
        t0 = time.perf_counter()
        lwp = lwp_bigm(net)
        lwp_time = time.perf_counter() - t0
        ref = _solve_row(net, index, "lwp", lwp, lwp_time, lwp, None, spec)
    except Exception as exc:  # recorded, the batch carries on
        log.exception("instance %d failed", index)
        return [MetricsRow(index, m, math.nan, math.nan, math.nan, math.nan, False, math.nan,
                           error=f"{type(exc).__name__}: {exc}") for m in spec.methods]
    z_base = ref.z if math.isfinite(ref.z) else None
    for method in spec.methods:
        if method == "lwp":
            rows.append(ref)
            continue
        try:
            t0 = time.perf_counter()
            M = compute_bigm(net, method, spec.ksp, spec.knn, lwp)
            bigm_time = time.perf_counter() - t0
            row = _solve_row(net, index, method, M, bigm_time, lwp, z_base, spec)
            if z_base is None:
                row.rel_gap = math.nan
            rows.append(row)
        except Exception as exc:
            log.exception("instance %d method %s failed", index, method)
            rows.append(MetricsRow(index, method, math.nan, math.nan, math.nan, math.nan, False,
                                   math.nan, error=f"{type(exc).__name__}: {exc}"))
    return rows


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> ExperimentResult:
    base = spec.network()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            batches = list(pool.map(run_instance, [spec] * spec.instance_count,
                                    range(spec.instance_count)))
    else:
        batches = [run_instance(spec, i, base) for i in range(spec.instance_count)]
    rows = sorted((r for b in batches for r in b), key=lambda r: (r.instance, r.method))
    return ExperimentResult(spec, rows, summarize(rows))


def summarize_gaps(gaps) -> GapSummary:
    """Sample statistics of relative gaps; ``non_neg`` counts gaps of at least 0.001 %."""
    vals = [g.rel_gap if isinstance(g, MetricsRow) else float(g) for g in gaps]
    vals = [v for v in vals if math.isfinite(v)]
    if not vals:
        raise ValueError("need at least one finite gap")
    return GapSummary(
        n=len(vals),
        max_gap=max(vals),
        min_gap=min(vals),
        avg_gap=statistics.fmean(vals),
        std_gap=statistics.stdev(vals) if len(vals) > 1 else 0.0,
        non_neg=sum(v >= NON_NEG_THRESHOLD for v in vals),
    )


def speedup(rows_method, rows_baseline) -> Speedup:
    """Mean baseline time over mean method time, paired by instance."""
    def times(rows) -> dict[int, float]:
        # MetricsRows pair by instance id, bare timings by position
        pairs = ((r.instance, r.time_s) if isinstance(r, MetricsRow) else (i, float(r))
                 for i, r in enumerate(rows))
        return {k: max(t, MIN_TIME) for k, t in pairs}

    tm, tb = times(rows_method), times(rows_baseline)
    keys = sorted(k for k in tm if k in tb and math.isfinite(tm[k]) and math.isfinite(tb[k]))
    if not keys:
        raise ValueError("no paired instances")
    ratio = statistics.fmean(tb[k] for k in keys) / statistics.fmean(tm[k] for k in keys)
    geo = math.exp(statistics.fmean(math.log(tb[k] / tm[k]) for k in keys))
    return Speedup(ratio, geo)


def summarize(rows: list[MetricsRow]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    base = [r for r in rows if r.method == "lwp"]
    for method in sorted({r.method for r in rows}):
        mine = [r for r in rows if r.method == method]
        ok = [r for r in mine if not r.error]
        entry: dict = {"instances": len(mine), "failed": len(mine) - len(ok),
                       "unsolved": sum(not r.solved for r in mine)}
        if ok:
            entry["avg_time_s"] = statistics.fmean(r.time_s for r in ok)
            entry["avg_bigm_time_s"] = statistics.fmean(r.bigm_time_s for r in ok)
            entry["avg_opt_gap"] = statistics.fmean(r.opt_gap for r in ok)
            entry["avg_ratio"] = statistics.fmean(r.avg_ratio for r in ok)
            try:
                entry["gaps"] = asdict(summarize_gaps(ok))
            except ValueError:
                pass
            if base and method != "lwp":
                entry["speedup"] = asdict(speedup(ok, [r for r in base if not r.error]))
        out[method] = entry
    return out


def rows_to_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS)
    w.writeheader()
    for r in rows:
        d = asdict(r)
        d["solved"] = int(r.solved)
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in d.items()})
    return buf.getvalue()


def rows_from_csv(text: str) -> list[MetricsRow]:
    types = {f.name: f.type for f in fields(MetricsRow)}
    out = []
    for d in csv.DictReader(io.StringIO(text)):
        kw = {}
        for k, v in d.items():
            t = types[k]
            if t == "int":
                kw[k] = int(v)
            elif t == "float":
                kw[k] = float(v)
            elif t == "bool":
                kw[k] = bool(int(v))
            else:
                kw[k] = v
        out.append(MetricsRow(**kw))
    return out
