"""Customer data, instance generation and travel-time matrices.

Customer locations come from Solomon-layout VRPTW text files. Release dates,
their estimate distributions and the deadline are generated on top of them.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STANDARD_BETA = (0.5, 1.0, 1.5)
STANDARD_DELTA = (0.0, 0.5, 1.0)
STANDARD_C = (0.6, 0.8, 1.0, 1.2)

DATA_DIR = Path(__file__).parent / "data"


class ParseError(ValueError):
    pass


class EmptyInstanceError(ValueError):
    pass


class DuplicateLocationError(ValueError):
    pass


class ParameterError(ValueError):
    pass


class Mode(str, Enum):
    AVAILABLE_AT_START = "available_at_start"
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class SolomonData:
    depot: tuple[float, float]
    customers: tuple[tuple[int, float, float], ...]
    horizon: float  # due date of the depot row
    name: str = ""


@dataclass(frozen=True)
class Customer:
    id: int
    x: float
    y: float
    true_release: float
    mode: Mode
    estimate_mean: float
    estimate_std: float

    def __post_init__(self):
        if self.id <= 0:
            raise ParameterError(f"customer id must be positive, got {self.id}")
        if self.true_release < 0:
            raise ParameterError(f"customer {self.id}: negative release date")
        if (self.mode is Mode.AVAILABLE_AT_START) != (self.true_release == 0):
            raise ParameterError(
                f"customer {self.id}: mode {self.mode.value} inconsistent with release {self.true_release}"
            )
        if self.estimate_std < 0:
            raise ParameterError(f"customer {self.id}: negative estimate std")
        if self.estimate_std == 0 and self.mode is not Mode.AVAILABLE_AT_START:
            raise ParameterError(f"customer {self.id}: zero std only allowed when available at start")


@dataclass(frozen=True)
class GenerationParams:
    beta: float
    delta: float
    c: float
    seed: int
    t_standard: float = 0.0
    horizon: float = 0.0
    sigma0: float = 0.0
    rounding: str = "ceil"

    @property
    def is_standard(self) -> bool:
        return self.beta in STANDARD_BETA and self.delta in STANDARD_DELTA and self.c in STANDARD_C


@dataclass(frozen=True)
class Instance:
    depot: tuple[float, float]
    customers: tuple[Customer, ...]
    travel: np.ndarray = field(repr=False, compare=False)
    deadline: float
    meta: GenerationParams
    name: str = ""

    def __post_init__(self):
        ids = [c.id for c in self.customers]
        if len(set(ids)) != len(ids):
            raise ParameterError("customer ids must be distinct")
        if self.deadline < 0:
            raise ParameterError("deadline must be non-negative")
        n = len(self.customers) + 1
        if self.travel.shape != (n, n):
            raise ParameterError(f"travel matrix must be {n}x{n}")
        self.travel.setflags(write=False)

    # node index 0 is the depot, customer with position p in `customers` is node p + 1
    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(c.id for c in self.customers)

    @property
    def n(self) -> int:
        return len(self.customers)

    def node(self, cid: int) -> int:
        return self._index[cid]

    @property
    def _index(self) -> dict[int, int]:
        idx = self.__dict__.get("_idx_cache")
        if idx is None:
            idx = {c.id: p + 1 for p, c in enumerate(self.customers)}
            object.__setattr__(self, "_idx_cache", idx)
        return idx

    def customer(self, cid: int) -> Customer:
        return self.customers[self._index[cid] - 1]

    def releases(self) -> dict[int, float]:
        return {c.id: c.true_release for c in self.customers}

    def id_travel(self) -> "IdTravel":
        """Travel times addressed by customer id (0 = depot)."""
        return IdTravel(self.travel, {0: 0, **self._index})

    def coords(self, cid: int) -> tuple[float, float]:
        if cid == 0:
            return self.depot
        c = self.customer(cid)
        return (c.x, c.y)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.depot == other.depot
            and self.customers == other.customers
            and self.deadline == other.deadline
            and self.meta == other.meta
            and self.name == other.name
            and np.array_equal(self.travel, other.travel)
        )

    __hash__ = None


class IdTravel:
    """Read-only view of a travel matrix keyed by customer id."""

    def __init__(self, matrix: np.ndarray, index: dict[int, int]):
        self.matrix = matrix
        self.index = index

    def __getitem__(self, key: tuple[int, int]) -> float:
        i, j = key
        return float(self.matrix[self.index[i], self.index[j]])

    def sub(self, ids: Sequence[int]) -> np.ndarray:
        """Matrix over depot followed by `ids` in the given order."""
        rows = [0] + [self.index[i] for i in ids]
        return self.matrix[np.ix_(rows, rows)]

    def route_duration(self, route: Sequence[int]) -> float:
        if not route:
            return 0.0
        nodes = [0, *route, 0]
        return float(sum(self[a, b] for a, b in zip(nodes, nodes[1:])))


def parse_customers(text: str, limit: int | None = None, name: str = "") -> SolomonData:
    """Read a Solomon VRPTW file body.

    Rows with the seven numeric columns (id, x, y, demand, ready, due, service)
    form the data block; the first such row is the depot. Demand and time
    windows are discarded apart from the depot due date, kept as the horizon.
    """
    rows: list[tuple[int, float, float, float]] = []
    in_block = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) == 7 and _all_numeric(tokens):
            in_block = True
            cid = float(tokens[0])
            if cid != int(cid):
                raise ParseError(f"line {lineno}: non-integer customer id {tokens[0]!r}")
            rows.append((int(cid), float(tokens[1]), float(tokens[2]), float(tokens[5])))
        elif in_block:
            raise ParseError(f"line {lineno}: expected 7 numeric columns, got {raw.strip()!r}")
    if not rows:
        raise ParseError("no customer rows found")
    depot_row, *cust_rows = rows
    if not cust_rows:
        raise EmptyInstanceError("file contains a depot row but no customers")
    if limit is not None:
        if limit < 1:
            raise ParameterError("limit must be at least 1")
        cust_rows = cust_rows[:limit]
    return SolomonData(
        depot=(depot_row[1], depot_row[2]),
        customers=tuple((cid, x, y) for cid, x, y, _ in cust_rows),
        horizon=depot_row[3],
        name=name,
    )


def _all_numeric(tokens: Iterable[str]) -> bool:
    try:
        for t in tokens:
            float(t)
    except ValueError:
        return False
    return True


def write_solomon(data: SolomonData, vehicles: tuple[int, int] = (25, 200)) -> str:
    """Render `data` in the Solomon layout (demand and windows are placeholders)."""
    lines = [
        data.name or "SYNTH",
        "",
        "VEHICLE",
        "NUMBER     CAPACITY",
        f"  {vehicles[0]:<10d} {vehicles[1]}",
        "",
        "CUSTOMER",
        "CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE   TIME",
        "",
    ]
    h = data.horizon
    lines.append(f"{0:5d} {_num(data.depot[0]):>10} {_num(data.depot[1]):>10} {0:10d} {0:10d} {_num(h):>10} {0:10d}")
    for cid, x, y in data.customers:
        lines.append(f"{cid:5d} {_num(x):>10} {_num(y):>10} {10:10d} {0:10d} {_num(h):>10} {10:10d}")
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def load_solomon(path: str | Path, limit: int | None = None) -> SolomonData:
    p = _resolve_data_path(path)
    return parse_customers(p.read_text(), limit=limit, name=p.stem)


def _resolve_data_path(path: str | Path) -> Path:
    s = str(path)
    if s.startswith("builtin:"):
        return DATA_DIR / f"{s.split(':', 1)[1]}.txt"
    return Path(path)


def builtin_solomon_names() -> list[str]:
    return sorted(p.stem for p in DATA_DIR.glob("*.txt"))


def travel_matrix(
    depot: tuple[float, float],
    customers: Sequence[tuple[float, float]],
    rounding: str = "ceil",
) -> np.ndarray:
    """Rounded Euclidean travel times; node 0 is the depot."""
    if rounding not in ("ceil", "floor"):
        raise ParameterError(f"unknown rounding {rounding!r}")
    pts = [tuple(map(float, depot))] + [tuple(map(float, c)) for c in customers]
    for p in pts:
        if not all(math.isfinite(v) for v in p):
            raise ParameterError("coordinates must be finite")
    n = len(pts)
    m = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            d = _rounded_distance(pts[i], pts[j], rounding)
            if d == 0 and pts[i] == pts[j]:
                raise DuplicateLocationError(f"nodes {i} and {j} share location {pts[i]}")
            # floor can round sub-unit distances to zero; keep arcs strictly positive
            m[i, j] = m[j, i] = max(d, 1)
    return m


def _rounded_distance(a: tuple[float, float], b: tuple[float, float], rounding: str) -> int:
    dx, dy = a[0] - b[0], a[1] - b[1]
    if dx.is_integer() and dy.is_integer():
        sq = int(dx) ** 2 + int(dy) ** 2
        r = math.isqrt(sq)
        if rounding == "ceil" and r * r != sq:
            r += 1
        return r
    dist = math.hypot(dx, dy)
    return math.ceil(dist) if rounding == "ceil" else math.floor(dist)


def generate_instance(
    data: SolomonData,
    beta: float,
    delta: float,
    c: float,
    seed: int,
    *,
    horizon: float | None = None,
    sigma0: float | None = None,
    rounding: str = "ceil",
    name: str | None = None,
) -> Instance:
    """Attach stochastic release dates and a deadline to Solomon customers.

    Each customer gets an estimate mean drawn uniformly from [0, beta * H] and a
    standard deviation sigma0 * beta; the true release is a draw from that
    normal distribution conditioned on being non-negative. A fraction `delta`
    of the customers is marked dynamic. The deadline is round(c * t_standard)
    where t_standard is the latest true release.
    """
    if not 0.0 <= delta <= 1.0:
        raise ParameterError(f"delta must lie in [0, 1], got {delta}")
    if beta <= 0 or c <= 0:
        raise ParameterError("beta and c must be positive")
    if seed < 0:
        raise ParameterError("seed must be non-negative")
    if not data.customers:
        raise EmptyInstanceError("no customers")
    h = float(data.horizon if horizon is None else horizon)
    s0 = 0.05 * h if sigma0 is None else float(sigma0)
    if h <= 0 or s0 <= 0:
        raise ParameterError("horizon and sigma0 must be positive")

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    n = len(data.customers)
    means = rng.uniform(0.0, beta * h, size=n)
    std = s0 * beta
    releases = np.empty(n)
    for k in range(n):
        draw = rng.normal(means[k], std)
        while draw < 0.0:
            draw = rng.normal(means[k], std)
        releases[k] = draw
    n_dynamic = int(round(delta * n))
    dynamic = set(rng.permutation(n)[:n_dynamic].tolist())

    customers = []
    for k, (cid, x, y) in enumerate(data.customers):
        r = float(releases[k])
        if r == 0.0:
            mode, mean_k, std_k = Mode.AVAILABLE_AT_START, 0.0, 0.0
        else:
            mode = Mode.DYNAMIC if k in dynamic else Mode.STATIC
            mean_k, std_k = float(means[k]), float(std)
        customers.append(Customer(cid, float(x), float(y), r, mode, mean_k, std_k))

    t_standard = float(releases.max())
    params = GenerationParams(
        beta=float(beta), delta=float(delta), c=float(c), seed=int(seed),
        t_standard=t_standard, horizon=h, sigma0=s0, rounding=rounding,
    )
    travel = travel_matrix(data.depot, [(x, y) for _, x, y in data.customers], rounding)
    if name is None:
        name = f"{data.name or 'inst'}-n{n}-b{beta:g}-d{delta:g}-c{c:g}-s{seed}"
    return Instance(
        depot=tuple(map(float, data.depot)),
        customers=tuple(customers),
        travel=travel,
        deadline=float(round(c * t_standard)),
        meta=params,
        name=name,
    )


def make_instance(
    depot: tuple[float, float],
    customers: Sequence[tuple[int, float, float, float]],
    deadline: float,
    *,
    dynamic: Iterable[int] = (),
    std: float = 1.0,
    travel: np.ndarray | None = None,
    name: str = "manual",
) -> Instance:
    """Build an instance by hand from (id, x, y, release) rows.

    Estimates are centred on the true release with the given std. Passing an
    explicit `travel` matrix overrides the Euclidean one (node order: depot,
    then customers as listed).
    """
    dyn = set(dynamic)
    custs = []
    for cid, x, y, r in customers:
        if r == 0:
            custs.append(Customer(cid, x, y, 0.0, Mode.AVAILABLE_AT_START, 0.0, 0.0))
        else:
            mode = Mode.DYNAMIC if cid in dyn else Mode.STATIC
            custs.append(Customer(cid, x, y, float(r), mode, float(r), float(std)))
    if travel is None:
        travel = travel_matrix(depot, [(x, y) for _, x, y, _ in customers])
    else:
        travel = np.array(travel, dtype=float if np.asarray(travel).dtype.kind == "f" else np.int64)
    t_std = max((c.true_release for c in custs), default=0.0)
    params = GenerationParams(beta=0.0, delta=0.0, c=0.0, seed=0, t_standard=t_std)
    return Instance(tuple(map(float, depot)), tuple(custs), travel, float(deadline), params, name)


def instance_to_dict(inst: Instance) -> dict:
    return {
        "format": "doprd-instance/1",
        "name": inst.name,
        "depot": list(inst.depot),
        "deadline": inst.deadline,
        "meta": asdict(inst.meta),
        "customers": [
            {**asdict(c), "mode": c.mode.value} for c in inst.customers
        ],
        "travel": inst.travel.tolist(),
    }


def instance_from_dict(d: dict) -> Instance:
    if d.get("format") != "doprd-instance/1":
        raise ParseError(f"unsupported instance format {d.get('format')!r}")
    customers = tuple(
        Customer(
            id=int(c["id"]), x=c["x"], y=c["y"], true_release=c["true_release"],
            mode=Mode(c["mode"]), estimate_mean=c["estimate_mean"], estimate_std=c["estimate_std"],
        )
        for c in d["customers"]
    )
    travel = np.array(d["travel"])
    return Instance(
        depot=tuple(d["depot"]),
        customers=customers,
        travel=travel,
        deadline=d["deadline"],
        meta=GenerationParams(**d["meta"]),
        name=d.get("name", ""),
    )


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n")


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))
