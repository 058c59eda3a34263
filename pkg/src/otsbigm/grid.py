"""Power network model, case-file readers and load scenarios.

All power quantities are stored in per-unit on ``Network.base_mva``.
Generator costs are per per-unit of power, so objective values come out in
currency per hour. Susceptance is taken as ``1/x`` when only the reactance
is known (taps and phase shifts are ignored).
"""

from __future__ import annotations

import json
import math
import re
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from typing import Iterable, Mapping

import numpy as np

DEFAULT_CAPACITY_MW = 27.0


class CaseParseError(ValueError):
    """Raised for malformed case text."""


class NetworkValidationError(ValueError):
    """Raised when case data violates a network invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float = 0.0
    name: str | None = None


@dataclass(frozen=True)
class Generator:
    bus: int
    cost: float
    p_min: float
    p_max: float


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float
    capacity: float
    switchable: bool = True

    @property
    def weight(self) -> float:
        """Path weight ``capacity / susceptance`` (largest angle spread it allows)."""
        return self.capacity / self.susceptance

    @property
    def ends(self) -> tuple[int, int]:
        return self.from_bus, self.to_bus


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        _validate(self)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @cached_property
    def branch_by_id(self) -> dict[int, Branch]:
        return {br.id: br for br in self.branches}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @cached_property
    def generator_buses(self) -> frozenset[int]:
        return frozenset(g.bus for g in self.generators)

    def is_generator(self, bus_id: int) -> bool:
        return bus_id in self.generator_buses

    @property
    def demand(self) -> np.ndarray:
        return np.array([b.demand for b in self.buses])

    @property
    def total_demand(self) -> float:
        return math.fsum(b.demand for b in self.buses)

    @property
    def is_adequate(self) -> bool:
        """False when total demand lies outside the aggregate generation range."""
        lo = math.fsum(g.p_min for g in self.generators)
        hi = math.fsum(g.p_max for g in self.generators)
        return lo - 1e-9 <= self.total_demand <= hi + 1e-9

    @cached_property
    def switchable_ids(self) -> tuple[int, ...]:
        return tuple(br.id for br in self.branches if br.switchable)

    @cached_property
    def bus_names(self) -> dict[str, int]:
        return {b.name: b.id for b in self.buses if b.name is not None}

    def bus_id(self, key: int | str) -> int:
        if isinstance(key, str):
            return self.bus_names[key]
        return key

    def branch_between(self, a: int | str, b: int | str) -> Branch:
        """First branch joining buses ``a`` and ``b`` (either orientation)."""
        a, b = self.bus_id(a), self.bus_id(b)
        for br in self.branches:
            if {br.from_bus, br.to_bus} == {a, b}:
                return br
        raise KeyError(f"no branch between {a} and {b}")

    def branch_label(self, branch_id: int) -> tuple:
        br = self.branch_by_id[branch_id]
        names = {b.id: b.name for b in self.buses}
        f, t = br.from_bus, br.to_bus
        return (names.get(f) or f, names.get(t) or t)

    def adjacency(self, exclude: Iterable[int] = ()) -> dict[int, list[tuple[int, int]]]:
        """Bus id -> list of (neighbour, branch id), skipping ``exclude``."""
        skip = set(exclude)
        adj: dict[int, list[tuple[int, int]]] = {b.id: [] for b in self.buses}
        for br in self.branches:
            if br.id in skip:
                continue
            adj[br.from_bus].append((br.to_bus, br.id))
            adj[br.to_bus].append((br.from_bus, br.id))
        return adj

    def components(self, exclude: Iterable[int] = ()) -> list[list[int]]:
        """Connected components (sorted bus-id lists) after removing ``exclude``."""
        adj = self.adjacency(exclude)
        seen: set[int] = set()
        comps = []
        for b in self.buses:
            if b.id in seen:
                continue
            comp = []
            queue = deque([b.id])
            seen.add(b.id)
            while queue:
                u = queue.popleft()
                comp.append(u)
                for v, _ in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        queue.append(v)
            comps.append(sorted(comp))
        return comps

    def is_connected(self, exclude: Iterable[int] = ()) -> bool:
        return len(self.components(exclude)) == 1

    def with_demands(self, demands: Mapping[int, float]) -> "Network":
        buses = tuple(replace(b, demand=demands.get(b.id, b.demand)) for b in self.buses)
        return replace(self, buses=buses)

    def with_switchable(self, ids: Iterable[int] | None) -> "Network":
        """Copy where exactly ``ids`` are switchable (``None`` means all)."""
        keep = None if ids is None else set(ids)
        branches = tuple(
            replace(br, switchable=keep is None or br.id in keep) for br in self.branches
        )
        return replace(self, branches=branches)


def _validate(net: Network) -> None:
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        raise NetworkValidationError("duplicate bus ids")
    if not ids:
        raise NetworkValidationError("network has no buses")
    known = set(ids)
    for b in net.buses:
        if not (b.demand >= 0 and math.isfinite(b.demand)):
            raise NetworkValidationError(f"bus {b.id}: demand must be finite and >= 0")
    branch_ids = [br.id for br in net.branches]
    if len(set(branch_ids)) != len(branch_ids):
        raise NetworkValidationError("duplicate branch ids")
    for br in net.branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise NetworkValidationError(f"branch {br.id}: unknown end bus")
        if br.from_bus == br.to_bus:
            raise NetworkValidationError(f"branch {br.id}: self loop")
        if not (br.susceptance > 0 and math.isfinite(br.susceptance)):
            raise NetworkValidationError(f"branch {br.id}: susceptance must be positive")
        if not (br.capacity > 0 and math.isfinite(br.weight)):
            raise NetworkValidationError(f"branch {br.id}: capacity must be positive and finite")
    for g in net.generators:
        if g.bus not in known:
            raise NetworkValidationError(f"generator at unknown bus {g.bus}")
        if not (0 <= g.p_min <= g.p_max) or g.cost < 0:
            raise NetworkValidationError(f"generator at bus {g.bus}: bad limits or cost")
    if not net.is_connected():
        raise NetworkValidationError("network graph is not connected")


# --------------------------------------------------------------------------
# case readers / writers


def parse_network(
    case_text: str,
    format: str = "json",
    default_capacity: float = DEFAULT_CAPACITY_MW,
    name: str = "",
) -> Network:
    """Build a :class:`Network` from JSON or MATPOWER-style case text.

    ``default_capacity`` is in MW and fills branches without a rating.
    """
    if format == "json":
        return _parse_json(case_text, default_capacity, name)
    if format in ("matpower", "matpower_subset"):
        return _parse_matpower(case_text, default_capacity, name)
    raise ValueError(f"unknown case format {format!r}")


def _parse_json(text: str, default_capacity: float, name: str) -> Network:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(str(exc)) from exc
    try:
        base = float(data.get("base_mva", 100.0))
        buses = [Bus(int(b["id"]), float(b.get("d", 0.0)), b.get("name")) for b in data["buses"]]
        branches = []
        for k, br in enumerate(data["branches"]):
            if "b" in br:
                b = float(br["b"])
            elif "x" in br:
                x = float(br["x"])
                if x == 0:
                    raise NetworkValidationError(f"branch {k}: zero reactance")
                b = 1.0 / x
            else:
                raise CaseParseError(f"branch {k}: needs 'b' or 'x'")
            fmax = br.get("fmax")
            fmax = default_capacity / base if fmax is None else float(fmax)
            branches.append(
                Branch(int(br.get("id", k)), int(br["from"]), int(br["to"]), b, fmax,
                       bool(br.get("switchable", True)))
            )
        gens = [
            Generator(int(g["bus"]), float(g["c"]), float(g.get("pmin", 0.0)), float(g["pmax"]))
            for g in data["generators"]
        ]
    except (KeyError, TypeError) as exc:
        raise CaseParseError(f"missing or malformed field: {exc}") from exc
    return Network(tuple(buses), tuple(branches), tuple(gens), base, data.get("name", name))


def network_to_json(net: Network) -> str:
    """Inverse of the JSON reader; floats round-trip exactly."""
    data = {
        "name": net.name,
        "base_mva": net.base_mva,
        "buses": [
            {"id": b.id, "d": b.demand, **({"name": b.name} if b.name is not None else {})}
            for b in net.buses
        ],
        "branches": [
            {"id": br.id, "from": br.from_bus, "to": br.to_bus, "b": br.susceptance,
             "fmax": br.capacity, "switchable": br.switchable}
            for br in net.branches
        ],
        "generators": [
            {"bus": g.bus, "c": g.cost, "pmin": g.p_min, "pmax": g.p_max} for g in net.generators
        ],
    }
    return json.dumps(data, indent=1)


_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;", re.S)
_SCALAR_RE = re.compile(r"mpc\.baseMVA\s*=\s*([-+0-9.eE]+)\s*;")


def _matrix(body: str, section: str) -> list[list[float]]:
    rows = []
    for line in body.split("\n"):
        line = line.split("%", 1)[0]
        for chunk in line.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                rows.append([float(v) for v in chunk.replace(",", " ").split()])
            except ValueError as exc:
                raise CaseParseError(f"{section}: bad number in {chunk!r}") from exc
    return rows


def _parse_matpower(text: str, default_capacity: float, name: str) -> Network:
    m = _SCALAR_RE.search(text)
    base = float(m.group(1)) if m else 100.0
    mats = {key: _matrix(body, key) for key, body in _MATRIX_RE.findall(text)}
    for key in ("bus", "gen", "branch", "gencost"):
        if key not in mats:
            raise CaseParseError(f"missing mpc.{key} section")
    if not name:
        fn = re.search(r"function\s+mpc\s*=\s*(\w+)", text)
        name = fn.group(1) if fn else ""

    buses = []
    for row in mats["bus"]:
        if len(row) < 3:
            raise CaseParseError("bus rows need at least 3 columns")
        buses.append(Bus(int(row[0]), row[2] / base))

    if len(mats["gencost"]) < len(mats["gen"]):
        raise CaseParseError("gencost has fewer rows than gen")
    gens = []
    for row, cost in zip(mats["gen"], mats["gencost"]):
        if len(row) < 10:
            raise CaseParseError("gen rows need at least 10 columns")
        if row[7] <= 0:
            continue
        gens.append(Generator(int(row[0]), _linear_cost(cost) * base, row[9] / base, row[8] / base))

    branches = []
    for row in mats["branch"]:
        if len(row) < 11:
            raise CaseParseError("branch rows need at least 11 columns")
        if row[10] <= 0:
            continue
        x = row[3]
        if x == 0:
            raise NetworkValidationError(f"branch {int(row[0])}-{int(row[1])}: zero reactance")
        rate = row[5] if row[5] > 0 else default_capacity
        branches.append(Branch(len(branches), int(row[0]), int(row[1]), 1.0 / abs(x), rate / base))
    return Network(tuple(buses), tuple(branches), tuple(gens), base, name)


def _linear_cost(row: list[float]) -> float:
    model, ncost = int(row[0]), int(row[3])
    coeffs = row[4:4 + ncost]
    if model != 2 or len(coeffs) != ncost:
        raise CaseParseError("only polynomial gencost rows are supported")
    # polynomial stored highest order first; keep the linear term
    return coeffs[-2] if ncost >= 2 else 0.0


def load_case(name: str, **kwargs) -> Network:
    """Load a bundled fixture: ``fig1``, ``ieee14`` or ``case14`` (MATPOWER text)."""
    pkg = resources.files("otsbigm") / "data"
    if name == "case14":
        return parse_network((pkg / "case14.m").read_text(), "matpower", **kwargs)
    return parse_network((pkg / f"{name}.json").read_text(), "json", **kwargs)


# --------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class LoadScenario:
    class_factor: float = 1.0
    multipliers: Mapping[int, float] = field(default_factory=dict)
    seed: int | None = None
    low: float = 0.95
    high: float = 1.05

    def __post_init__(self):
        for bus, v in self.multipliers.items():
            if not (self.low <= v <= self.high):
                raise ValueError(f"multiplier {v} for bus {bus} outside [{self.low}, {self.high}]")


def random_scenario(net: Network, class_factor: float = 1.0, seed: int = 0,
                    low: float = 0.95, high: float = 1.05) -> LoadScenario:
    """Independent uniform(low, high) multiplier per bus, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    draws = rng.uniform(low, high, size=net.n_bus)
    mult = {b.id: float(v) for b, v in zip(net.buses, draws)}
    return LoadScenario(class_factor, mult, seed, low, high)


def apply_scenario(net: Network, sc: LoadScenario) -> Network:
    missing = [b.id for b in net.buses if b.demand > 0 and b.id not in sc.multipliers]
    if missing:
        raise ValueError(f"scenario has no multiplier for demand buses {missing}")
    demands = {
        b.id: b.demand * sc.class_factor * sc.multipliers.get(b.id, 1.0) for b in net.buses
    }
    return net.with_demands(demands)


# --------------------------------------------------------------------------
# fixtures

FIG1_COSTS = {"g1": 1.0, "g2": 2.0}


def figure1_example() -> Network:
    """Seven-bus example with two switchable links (b, g1) and (f, g2).

    Unit susceptances; capacity 3 on fixed links and 1 on switchable ones;
    2.5 units of demand at ``t``. Costs of g1/g2 are 1 and 2.
    """
    names = ["t", "b", "d", "f", "h", "g1", "g2"]
    ids = {n: k + 1 for k, n in enumerate(names)}
    buses = tuple(Bus(ids[n], 2.5 if n == "t" else 0.0, n) for n in names)
    links = [("t", "b", 3.0, False), ("t", "f", 3.0, False), ("f", "h", 3.0, False),
             ("h", "g2", 3.0, False), ("b", "d", 3.0, False), ("d", "g1", 3.0, False),
             ("b", "g1", 1.0, True), ("f", "g2", 1.0, True)]
    branches = tuple(
        Branch(k, ids[a], ids[b], 1.0, cap, sw) for k, (a, b, cap, sw) in enumerate(links)
    )
    gens = (Generator(ids["g1"], FIG1_COSTS["g1"], 0.0, 10.0),
            Generator(ids["g2"], FIG1_COSTS["g2"], 0.0, 10.0))
    return Network(buses, branches, gens, base_mva=1.0, name="fig1")
