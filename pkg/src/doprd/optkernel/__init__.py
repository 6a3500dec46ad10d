"""Exact solvers: TSP, unit-prize orienteering, direct-trip bound and the
perfect-information orienteering problem with release dates (OP-rd).

Two engines back every solver: a pruned subset dynamic programme
(`subset_dp`) for small node sets and a HiGHS branch-and-cut with lazy GSEC
separation (`milp`) for larger ones or as an independent cross-check.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import milp as _milp
from . import subset_dp
from .gsec import GsecCut, separate_gsec

__all__ = [
    "ExactResult", "GsecCut", "InfeasibleSchedule", "Tour", "check_schedule",
    "op_profile", "op_reaches", "separate_gsec", "solve_op", "solve_oprd_perfect", "solve_tsp", "ub_trips",
]

DP_LIMIT = 20
TSP_EXACT_BOUND = 18
OPRD_DP_LIMIT = 22

Travel = Callable  # anything indexable as travel[i, j] by customer id, depot = 0


class InfeasibleSchedule(ValueError):
    pass


@dataclass(frozen=True)
class Tour:
    nodes: tuple[int, ...]
    duration: float

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class ExactResult:
    value: int
    tour: Tour | None = None
    trips: tuple[tuple[float, Tour], ...] = ()
    status: str = "optimal"  # or "incumbent_with_bound"
    bound: int = 0
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.value > self.bound:
            raise ValueError(f"value {self.value} exceeds bound {self.bound}")
        if self.status == "optimal" and self.value != self.bound:
            raise ValueError("optimal result must have value == bound")


def _matrix(ids: Sequence[int], travel) -> np.ndarray:
    if hasattr(travel, "sub"):
        return np.asarray(travel.sub(ids), dtype=float)
    nodes = [0, *ids]
    return np.array([[travel[a, b] if a != b else 0.0 for b in nodes] for a in nodes], dtype=float)


def tour_duration(route: Sequence[int], travel) -> float:
    nodes = [0, *route, 0] if route else []
    return float(sum(travel[a, b] for a, b in zip(nodes, nodes[1:])))


def solve_tsp(ids, travel, exact_bound: int = TSP_EXACT_BOUND, method: str = "auto", time_limit: float | None = None) -> Tour:
    """Minimum-duration closed tour from the depot through every id."""
    ids = sorted(set(ids))
    if not ids:
        raise ValueError("solve_tsp needs at least one customer")
    if method == "auto":
        method = "dp" if len(ids) <= exact_bound else "milp"
    if method == "dp":
        if len(ids) > max(exact_bound, DP_LIMIT):
            raise ValueError(f"{len(ids)} customers exceed the exact DP bound {exact_bound}")
        d = _matrix(ids, travel)
        full = subset_dp.profile(d)
        entry = full[-1]
        if entry.size != len(ids):
            raise RuntimeError("DP failed to close a full tour")
        return Tour(tuple(ids[k] for k in entry.nodes), entry.duration)
    m = _milp.Model(maximize=False)
    rv = _milp.add_route(m, ids)
    for (i, j), v in rv.x.items():
        m.obj[v] = float(travel[i, j])
    for v in rv.y.values():
        m.lb[v] = 1.0
    res = _milp.branch_and_cut(m, [rv], time_limit)
    if res.solution is None:
        raise TimeoutError("TSP not solved within the time limit")
    route = rv.route(res.solution)
    return Tour(tuple(route), tour_duration(route, travel))


def op_profile(ids, travel, budget: float) -> list[Tour]:
    """For k = 0, 1, ...: the shortest tour visiting exactly k of `ids` within `budget`.

    Ties between equally short tours go to the lexicographically smallest id set.
    """
    ids = sorted(set(ids))
    if budget < 0 or not ids:
        return [Tour((), 0.0)]
    d = _matrix(ids, travel)
    return [Tour(tuple(ids[k] for k in e.nodes), e.duration) for e in subset_dp.profile(d, budget)]


def solve_op(ids, travel, budget: float, method: str = "auto", time_limit: float | None = None) -> ExactResult:
    """Largest number of `ids` servable by one tour of duration <= budget."""
    ids = sorted(set(ids))
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if not ids:
        return ExactResult(0, Tour((), 0.0), bound=0)
    # customers whose round trip alone exceeds the budget never fit
    ids = [i for i in ids if travel[0, i] + travel[i, 0] <= budget]
    if not ids:
        return ExactResult(0, Tour((), 0.0), bound=0)
    if method == "auto":
        method = "dp" if len(ids) <= DP_LIMIT else "milp"
    if method == "dp":
        best = op_profile(ids, travel, budget)[-1]
        return ExactResult(len(best), best, bound=len(best))
    m = _milp.Model(maximize=True)
    rv = _milp.add_route(m, ids, prize=1.0)
    m.add({v: float(travel[i, j]) for (i, j), v in rv.x.items()}, hi=float(budget))
    res = _milp.branch_and_cut(m, [rv], time_limit)
    if res.solution is None:
        bound = len(ids) if res.bound is None else min(len(ids), math.floor(res.bound + 1e-6))
        return ExactResult(0, Tour((), 0.0), status="incumbent_with_bound", bound=bound)
    route = rv.route(res.solution)
    value = int(round(res.value))
    if 0 < len(route) <= DP_LIMIT:
        tour = solve_tsp(route, travel)
    else:
        tour = Tour(tuple(route), tour_duration(route, travel))
    return ExactResult(value, tour, bound=value, info={"rounds": res.rounds, "cuts": res.cuts})


def _round_trip(i: int, travel) -> float:
    return float(travel[0, i] + travel[i, 0])


def ub_trips(releases: Mapping[int, float], travel, deadline: float) -> ExactResult:
    """Maximum number of direct depot-customer-depot trips that fit before the deadline.

    Customers are taken in release order (ties by id); a selection is feasible
    when every selected customer's release plus the durations of its own and
    all later selected trips stays within the deadline. Solved exactly by a
    backward DP keeping the minimum later load for every selection count.
    """
    order = sorted(releases, key=lambda i: (releases[i], i))
    load = [0.0]  # load[c]: minimum total duration of c trips chosen among later customers
    picks: list[list[list[int]]] = [[[]]]
    for i in reversed(order):
        rt = _round_trip(i, travel)
        new_load = list(load)
        new_picks = [list(p) for p in picks[-1]]
        for c in range(len(load)):
            if releases[i] + load[c] + rt <= deadline:
                w = load[c] + rt
                if c + 1 == len(new_load):
                    new_load.append(w)
                    new_picks.append([i, *picks[-1][c]])
                elif w < new_load[c + 1]:
                    new_load[c + 1] = w
                    new_picks[c + 1] = [i, *picks[-1][c]]
        load = new_load
        picks.append(new_picks)
    count = len(load) - 1
    chosen = picks[-1][count]
    trips = []
    end = deadline
    for i in reversed(chosen):
        rt = _round_trip(i, travel)
        trips.append((end - rt, Tour((i,), rt)))
        end -= rt
    trips.reverse()
    return ExactResult(count, None, tuple(trips), bound=count)


def check_schedule(trips, releases: Mapping[int, float], travel, deadline: float, tol: float = 1e-9) -> int:
    """Validate an OP-rd schedule of (start, Tour) trips; return the parcels served.

    Trips must be back-to-back, depart no earlier than the releases they
    carry, finish by the deadline, visit each customer at most once and form
    depot-connected tours.
    """
    seen: set[int] = set()
    prev_end = None
    for start, tour in trips:
        if not tour.nodes:
            continue
        if prev_end is not None and abs(start - prev_end) > tol:
            raise InfeasibleSchedule(f"trip at {start} does not follow the previous one ending at {prev_end}")
        if start < -tol:
            raise InfeasibleSchedule("trip departs before time 0")
        for i in tour.nodes:
            if i in seen:
                raise InfeasibleSchedule(f"customer {i} served twice")
            if releases[i] > start + tol:
                raise InfeasibleSchedule(f"customer {i} released at {releases[i]} after departure {start}")
            seen.add(i)
        nodes = [0, *tour.nodes, 0]
        x = {(a, b): 1.0 for a, b in zip(nodes, nodes[1:])}
        if separate_gsec(x, {i: 1.0 for i in nodes}):
            raise InfeasibleSchedule("trip contains a subtour")
        dur = tour_duration(tour.nodes, travel)
        if abs(dur - tour.duration) > 1e-6:
            raise InfeasibleSchedule("trip duration does not match the travel matrix")
        prev_end = start + dur
    if prev_end is not None and prev_end > deadline + tol:
        raise InfeasibleSchedule(f"schedule ends at {prev_end} after the deadline {deadline}")
    return len(seen)


def solve_oprd_perfect(
    releases: Mapping[int, float],
    travel,
    deadline: float,
    trip_bound: int | None = None,
    time_limit: float = 60.0,
    method: str = "auto",
    warm_start=None,
    symmetry: bool = True,
) -> ExactResult:
    """Maximum parcels deliverable by back-to-back trips with known release dates.

    Waiting is shifted to the start of the day, so the last trip ends at the
    deadline. `warm_start` is a feasible schedule (defaults to the direct-trip
    schedule) kept as the incumbent when the time limit expires.
    """
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")
    # a customer fits only if its direct trip fits after its release
    cands = sorted(i for i, r in releases.items() if r + _round_trip(i, travel) <= deadline)
    if not cands:
        return ExactResult(0, trips=(), bound=0)
    rel = {i: float(releases[i]) for i in cands}
    if warm_start is None or trip_bound is None:
        ubr = ub_trips(rel, travel, deadline)
        if trip_bound is None:
            trip_bound = ubr.value
        if warm_start is None:
            warm_start = ubr.trips
    if trip_bound < 1:
        raise ValueError("trip_bound must be at least 1")
    start_value = check_schedule(warm_start, releases, travel, deadline)
    if method == "auto":
        method = "dp" if len(cands) <= OPRD_DP_LIMIT else "milp"
    if method == "dp":
        res = _oprd_dp(rel, travel, deadline, cands, time_limit)
        if res.value < start_value:
            raise RuntimeError("subset DP optimum below the warm start")
        return res
    return _oprd_milp(rel, travel, deadline, cands, trip_bound, time_limit, warm_start, start_value, symmetry)


def _oprd_dp(rel, travel, deadline, cands, time_limit: float | None = None) -> ExactResult:
    """Layered forward DP over feasible customer sets.

    E(S) is the earliest time the vehicle can be back at the depot having
    served exactly S. Trips can always be reordered by their latest release
    without delaying the schedule, so the last trip of S may be taken to
    contain the latest-released customer of S (its "top"):

        E(S) = min over trips T with top(S) in T of max(E(S - T), r_top) + tour(T).

    Feasible sets are closed under removal, so layer k is generated from
    layer k - 1. All submask choices for a layer are evaluated as numpy
    batches.
    """
    # CPU time of this process, so concurrent benchmark workers do not eat into the budget
    start_clock = time.process_time()
    order = sorted(cands, key=lambda i: (rel[i], i))
    n = len(order)
    r = np.array([rel[i] for i in order])
    d = _matrix(order, travel)
    trips = subset_dp.subset_tour_costs(d, deadline)
    # dense lookup tables indexed by mask
    trip_cost = np.full(1 << n, np.inf)
    if trips:
        trip_cost[np.fromiter(trips.keys(), dtype=np.int64)] = np.fromiter(trips.values(), dtype=float)
    earliest = np.full(1 << n, np.inf)
    earliest[0] = 0.0
    layers = [(np.array([0], dtype=np.int64), np.array([0.0]), np.array([0], dtype=np.int64))]
    timed_out = False
    for k in range(1, n + 1):
        prev = layers[-1][0]
        bits = np.int64(1) << np.arange(n, dtype=np.int64)
        cand = (prev[:, None] | bits[None, :])[(prev[:, None] & bits[None, :]) == 0]
        masks = np.unique(cand)
        if not len(masks):
            break
        elem = np.zeros((len(masks), k), dtype=np.int64)
        fill = np.zeros(len(masks), dtype=np.int64)
        for b in range(n):
            has = (masks >> b) & 1 == 1
            elem[has, fill[has]] = b
            fill[has] += 1
        top = elem[:, -1]
        top_bit = np.int64(1) << top
        # float matmul hits BLAS; masks below 2**53 stay exact
        low_bits = (np.int64(1) << elem[:, :-1]).astype(float)
        best = np.full(len(masks), np.inf)
        best_sub = np.zeros(len(masks), dtype=np.int64)
        n_pat = 1 << (k - 1)
        chunk = 256
        for p0 in range(0, n_pat, chunk):
            pats = np.arange(p0, min(p0 + chunk, n_pat), dtype=np.int64)
            sel = ((pats[None, :] >> np.arange(k - 1, dtype=np.int64)[:, None]) & 1).astype(float)
            sub = top_bit[:, None] + (low_bits @ sel).astype(np.int64)  # (m, P)
            end = np.maximum(earliest[masks[:, None] - sub], r[top][:, None]) + trip_cost[sub]
            arg = end.argmin(axis=1)
            val = end[np.arange(len(masks)), arg]
            upd = val < best
            best[upd] = val[upd]
            best_sub[upd] = sub[np.arange(len(masks)), arg][upd]
        ok = best <= deadline + 1e-9
        if not ok.any():
            break
        layer = (masks[ok], best[ok], best_sub[ok])
        layers.append(layer)
        earliest[layer[0]] = layer[1]
        if time_limit is not None and time.process_time() - start_clock > time_limit:
            timed_out = k < n
            break

    value = len(layers) - 1
    masks, es, subs = layers[-1]
    pick = int(np.lexsort((masks, es))[0])
    sub_of = {}
    for lm, _, ls in layers[1:]:
        sub_of.update(zip(lm.tolist(), ls.tolist()))
    chain = []
    mask = int(masks[pick])
    while mask:
        sub = sub_of[mask]
        chain.append([order[b] for b in subset_dp.mask_nodes(sub)])
        mask ^= sub
    # waiting moves to the start of the day: trips run back to back up to the deadline
    trips_out = []
    end = float(deadline)
    for nodes in chain:
        tour = solve_tsp(nodes, travel, exact_bound=DP_LIMIT)
        trips_out.append((end - tour.duration, tour))
        end -= tour.duration
    trips_out.reverse()
    info = {"method": "dp", "layers": value}
    if timed_out:
        return ExactResult(value, trips=tuple(trips_out), status="incumbent_with_bound", bound=n, info=info)
    return ExactResult(value, trips=tuple(trips_out), bound=value, info=info)


def _oprd_milp(rel, travel, deadline, cands, trip_bound, time_limit, warm_start, start_value, symmetry) -> ExactResult:
    n = len(cands)
    m = _milp.Model(maximize=True)
    routes = [_milp.add_route(m, cands, prize=1.0) for _ in range(trip_bound)]
    starts = [m.var(0.0, 0.0, float(deadline), integer=False) for _ in range(trip_bound)]
    for k, rv in enumerate(routes):
        row = {starts[k]: -1.0}
        for (i, j), v in rv.x.items():
            row[v] = row.get(v, 0.0) - float(travel[i, j])
        if k + 1 < trip_bound:
            row[starts[k + 1]] = 1.0
            m.add(row, 0.0, 0.0)
        else:
            # the trip after the last usable one is an empty sentinel starting at the deadline
            m.add({kk: -vv for kk, vv in row.items()}, float(deadline), float(deadline))
        for i in cands:
            m.add({starts[k]: 1.0, rv.y[i]: -rel[i]}, lo=0.0)
    for i in cands:
        m.add({rv.y[i]: 1.0 for rv in routes}, hi=1.0)
    if symmetry:
        for k in range(trip_bound - 1):
            m.add({routes[k].y[0]: 1.0, routes[k + 1].y[0]: -1.0}, hi=0.0)
    res = _milp.branch_and_cut(m, routes, time_limit)
    info = {"method": "milp", "rounds": res.rounds, "cuts": res.cuts}
    if res.status == "optimal":
        trips = []
        for k, rv in enumerate(routes):
            route = rv.route(res.solution)
            if route:
                trips.append((float(res.solution[starts[k]]), Tour(tuple(route), tour_duration(route, travel))))
        value = int(round(res.value))
        if value < start_value:
            raise RuntimeError("branch-and-cut optimum below the warm start")
        return ExactResult(value, trips=tuple(trips), bound=value, info=info)
    bound = n if res.bound is None else min(n, math.floor(res.bound + 1e-6))
    bound = max(bound, start_value)
    status = "optimal" if bound == start_value else "incumbent_with_bound"
    return ExactResult(start_value, trips=tuple(warm_start), status=status, bound=bound, info=info)


def op_reaches(ids, travel, budget: float, k: int) -> bool:
    """True when some tour through at least `k` of `ids` fits within `budget`.

    Stops the subset DP at cardinality `k`, which is far cheaper than a full
    orienteering solve when `k` is small.
    """
    if k <= 0:
        return True
    ids = sorted(set(ids))
    if len(ids) < k or budget < 0:
        return False
    layers = 0
    for _ in subset_dp.run_layers(_matrix(ids, travel), budget, keep=False, max_size=k):
        layers += 1
    return layers >= k
