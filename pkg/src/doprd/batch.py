"""Backward batch construction used to approximate the value of future routes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence


@dataclass(frozen=True)
class Batch:
    index: int
    tau_start: float
    tau_end: float
    rho_k: int
    assigned_unknown: frozenset[int]


@dataclass(frozen=True)
class BatchPlan:
    batches: tuple[Batch, ...]
    spare: frozenset[int]  # K0
    assignment: Mapping[int, int] = field(default_factory=dict)  # unknown id -> k, 0 = unassigned
    rho: int = 1
    t_d: float = 1.0

    @property
    def n_batches(self) -> int:
        return len(self.batches)

    def batch(self, k: int) -> Batch:
        return self.batches[k - 1]

    @property
    def n_scheduled_unknown(self) -> int:
        return sum(1 for k in self.assignment.values() if k != 0)

    def spare_capacity(self, upto: int | None = None) -> int:
        """Total spare slots over K0 batches with index <= upto (all if None)."""
        return sum(
            self.rho - b.rho_k
            for b in self.batches
            if b.index in self.spare and (upto is None or b.index <= upto)
        )

    def unknown_served(self, upto: int) -> int:
        return sum(b.rho_k for b in self.batches[:upto])

    def executable(self, route0_end: float) -> int:
        """Number of batches (a prefix of K) that can start after route 0 returns."""
        m = 0
        for b in self.batches:
            if b.tau_start >= route0_end:
                m += 1
            else:
                break
        return m


def daganzo_duration(area: float, rho: int) -> float:
    """Continuous-approximation length of a tour through `rho` points in `area`."""
    if area < 0:
        raise ValueError("area must be non-negative")
    if rho < 1:
        raise ValueError("rho must be at least 1")
    return 0.75 * math.sqrt(area * rho)


def bounding_box_area(points: Iterable[tuple[float, float]]) -> float:
    pts = list(points)
    if not pts:
        return 0.0
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return (max(xs) - min(xs)) * (max(ys) - min(ys))


def build_batches(
    t_e: float,
    known: Iterable[int],
    realized: Mapping[int, float],
    deadline: float,
    rho: int,
    t_d: float,
) -> BatchPlan:
    """Schedule future batches backwards from the deadline.

    Requests are swept from the latest release. A request enters the current
    batch when its release does not exceed the batch start; known requests
    (release 0) take a slot and mark the batch as able to host known parcels
    but get no fixed assignment. A batch closes after `rho` entries or at the
    last request, and the sweep stops once a batch would start at or before
    `t_e`.
    """
    if t_d <= 0:
        raise ValueError("batch duration must be positive")
    if rho < 1:
        raise ValueError("rho must be at least 1")
    known = set(known)
    requests = [(0.0, i, True) for i in known] + [(float(r), i, False) for i, r in realized.items()]
    requests.sort(key=lambda q: (q[0], q[1]))
    assignment = {i: 0 for i in realized}

    batches: list[Batch] = []
    k = 1
    t_k = deadline - t_d
    filled = 0
    rho_k = 0
    members: list[int] = []
    n = len(requests)
    for pos in range(n - 1, -1, -1):
        if t_k <= t_e:
            break
        release, cid, is_known = requests[pos]
        if release <= t_k:
            if not is_known:
                assignment[cid] = k
                rho_k += 1
                members.append(cid)
            filled += 1
            if filled == rho or pos == 0:
                batches.append(Batch(k, t_k, t_k + t_d, rho_k, frozenset(members)))
                k += 1
                t_k -= t_d
                filled = 0
                rho_k = 0
                members = []
    # any batch with room left can take known parcels, whether or not one was seen in the sweep
    spare = frozenset(b.index for b in batches if b.rho_k < rho)
    return BatchPlan(tuple(batches), spare, assignment, rho, t_d)


def opt_count(known_count: int, plan: BatchPlan) -> int:
    """Maximum number of unserved requests servable by the batches (constant duration)."""
    spare = plan.spare_capacity()
    if known_count < spare:
        return known_count + plan.n_scheduled_unknown
    return plan.n_batches * plan.rho


def brute_force_max_served(
    t_e: float,
    releases: Sequence[float],
    deadline: float,
    rho: int,
    t_d: float,
    limit: int = 12,
) -> int:
    """Exact maximum served by exhaustive search over slot assignments.

    Slots are back-to-back windows of length `t_d` ending at `deadline`; slot j
    starts at deadline - j * t_d and is usable when that start exceeds `t_e`.
    A request fits a slot whose start is not earlier than its release.

    Requests are tried latest release first, so each one can use a prefix of
    the slots that only grows. Slots inside the current prefix are then
    interchangeable for every remaining request, and the search memoizes on
    the sorted multiset of their remaining capacities.
    """
    if len(releases) > limit:
        raise ValueError(f"brute force limited to {limit} requests")
    starts = []
    j = 1
    while deadline - j * t_d > t_e and len(starts) < len(releases):
        starts.append(deadline - j * t_d)
        j += 1
    rel = sorted(releases, reverse=True)
    reach = [sum(1 for s in starts if r <= s) for r in rel]

    @lru_cache(maxsize=None)
    def search(i: int, caps: tuple[int, ...]) -> int:
        if i == len(rel):
            return 0
        caps = caps + (rho,) * (reach[i] - len(caps))
        best = search(i + 1, caps)
        for c in set(caps):
            if c > 0:
                k = caps.index(c)
                nxt = tuple(sorted(caps[:k] + (c - 1,) + caps[k + 1:]))
                best = max(best, 1 + search(i + 1, nxt))
        return best

    return search(0, ())
