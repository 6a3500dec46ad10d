import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doprd.instance import make_instance
from doprd.optkernel import (
    ExactResult,
    InfeasibleSchedule,
    Tour,
    check_schedule,
    op_reaches,
    solve_op,
    solve_oprd_perfect,
    solve_tsp,
    tour_duration,
    ub_trips,
)
from doprd.optkernel.gsec import separate_gsec

import oracles


def line(n):
    """Customers at 1..n on a ray from the depot."""
    return make_instance((0, 0), [(i, i, 0, 0.0) for i in range(1, n + 1)], 100).id_travel()


def star(round_trips):
    """Depot-centred matrix with given round-trip times and far-apart customers."""
    n = len(round_trips)
    m = np.zeros((n + 1, n + 1))
    for i, rt in enumerate(round_trips, 1):
        m[0, i] = m[i, 0] = rt / 2
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i != j:
                m[i, j] = m[0, i] + m[0, j]
    return m


def random_instance(rng, n, deadline=60):
    pts = set()
    while len(pts) < n:
        p = (rng.randint(0, 16), rng.randint(0, 16))
        if p != (8, 8):
            pts.add(p)
    rows = [(i, x, y, float(rng.randint(0, deadline))) for i, (x, y) in enumerate(sorted(pts), 1)]
    inst = make_instance((8, 8), rows, deadline)
    return inst.releases(), inst.id_travel(), float(deadline)


# --- TSP ---

def test_tsp_single():
    assert solve_tsp({1}, star([6])).duration == 6


def test_tsp_collinear():
    t = solve_tsp({1, 2}, line(2))
    assert t.duration == 4
    assert t.nodes in ((1, 2), (2, 1))


def test_tsp_empty_raises():
    with pytest.raises(ValueError):
        solve_tsp(set(), line(2))


def test_tsp_permutation_invariant():
    rng = random.Random(3)
    _, tr, _ = random_instance(rng, 7)
    ids = [1, 2, 3, 4, 5, 6, 7]
    base = solve_tsp(ids, tr).duration
    for _ in range(5):
        rng.shuffle(ids)
        assert solve_tsp(ids, tr).duration == base


def test_tsp_milp_matches_dp():
    rng = random.Random(4)
    for n in (3, 5, 7):
        _, tr, _ = random_instance(rng, n)
        ids = range(1, n + 1)
        assert solve_tsp(ids, tr, method="milp").duration == pytest.approx(solve_tsp(ids, tr).duration)


# --- OP ---

def test_op_zero_budget():
    r = solve_op({1, 2, 3}, line(3), 0)
    assert r.value == 0 and (r.tour is None or r.tour.nodes == ())


@pytest.mark.parametrize("budget,value", [(6, 3), (4, 2)])
def test_op_line(budget, value):
    r = solve_op({1, 2, 3}, line(3), budget)
    assert r.value == value
    assert set(r.tour.nodes) == set(range(1, value + 1))
    assert r.tour.duration <= budget


def test_op_milp_matches_dp():
    rng = random.Random(5)
    for n in (4, 6, 8):
        _, tr, _ = random_instance(rng, n)
        for budget in (10, 25, 40):
            ids = range(1, n + 1)
            assert solve_op(ids, tr, budget, method="milp").value == solve_op(ids, tr, budget).value


def test_op_reaches_agrees():
    rng = random.Random(6)
    for _ in range(20):
        n = rng.randint(1, 7)
        _, tr, _ = random_instance(rng, n)
        budget = rng.randint(0, 40)
        v = solve_op(range(1, n + 1), tr, budget).value
        for k in range(n + 2):
            assert op_reaches(range(1, n + 1), tr, budget, k) == (k <= v)


# --- direct-trip bound ---

@pytest.mark.parametrize(
    "rel,rts,deadline,expected",
    [({1: 0, 2: 0}, [2, 2], 4, 2), ({1: 3}, [2], 4, 0), ({1: 0, 2: 0, 3: 0}, [2, 2, 2], 5, 2)],
)
def test_ub_trips_examples(rel, rts, deadline, expected):
    res = ub_trips(rel, star(rts), deadline)
    assert res.value == expected
    assert check_schedule(res.trips, rel, star(rts), deadline) == expected


# --- perfect information ---

def test_oprd_empty():
    assert solve_oprd_perfect({}, star([]), 10).value == 0


def test_oprd_two_releases():
    res = solve_oprd_perfect({1: 0.0, 2: 6.0}, star([2, 2]), 8)
    assert res.value == 2 and res.status == "optimal"
    assert check_schedule(res.trips, {1: 0.0, 2: 6.0}, star([2, 2]), 8) == 2


def test_oprd_diagonal():
    tr = make_instance((0, 0), [(1, 1, 0, 5.0), (2, 0, 1, 6.0)], 8).id_travel()
    assert tr[1, 2] == 2
    assert solve_oprd_perfect({1: 5.0, 2: 6.0}, tr, 8).value == 1


def test_oprd_time_limit_positive():
    with pytest.raises(ValueError):
        solve_oprd_perfect({1: 0.0}, star([2]), 8, 1, time_limit=0)


def test_oprd_rejects_bad_warm_start():
    bad = ((0.0, Tour((1,), 2.0)),)
    with pytest.raises(InfeasibleSchedule):
        solve_oprd_perfect({1: 1.0}, star([2]), 8, 1, warm_start=bad)


def test_schedule_ends_at_deadline():
    rng = random.Random(8)
    rel, tr, dl = random_instance(rng, 7)
    res = solve_oprd_perfect(rel, tr, dl)
    if res.trips:
        start, tour = res.trips[-1]
        assert start + tour.duration == pytest.approx(dl)


def test_all_zero_release_equals_op():
    rng = random.Random(9)
    for _ in range(10):
        n = rng.randint(1, 7)
        rel, tr, dl = random_instance(rng, n)
        rel = {i: 0.0 for i in rel}
        op_value = solve_op(rel, tr, dl).value
        assert solve_oprd_perfect(rel, tr, dl).value == op_value
        assert ub_trips(rel, tr, dl).value <= op_value


def test_symmetry_constraints_keep_value():
    rng = random.Random(10)
    for _ in range(6):
        rel, tr, dl = random_instance(rng, rng.randint(2, 5), deadline=40)
        bound = max(ub_trips(rel, tr, dl).value, 1)
        a = solve_oprd_perfect(rel, tr, dl, bound, method="milp", symmetry=True)
        b = solve_oprd_perfect(rel, tr, dl, bound, method="milp", symmetry=False)
        assert a.value == b.value == solve_oprd_perfect(rel, tr, dl).value


def test_enumeration_suite_small():
    """A lighter version of the full acceptance suite that stays in the default run."""
    rng = random.Random(12)
    for _ in range(25):
        rel, tr, dl = random_instance(rng, rng.randint(1, 6))
        ids = sorted(rel)
        assert solve_tsp(ids, tr).duration == oracles.tsp(ids, tr)
        budget = rng.randint(0, 50)
        assert solve_op(ids, tr, budget).value == oracles.op(ids, tr, budget)
        ub = ub_trips(rel, tr, dl)
        assert ub.value == oracles.ub_trips(rel, tr, dl)
        parcels, trips = oracles.oprd(rel, tr, dl)
        res = solve_oprd_perfect(rel, tr, dl, max(ub.value, 1), warm_start=ub.trips)
        assert res.value == parcels
        assert check_schedule(res.trips, rel, tr, dl) == parcels
        assert ub.value >= trips


def test_trip_oracles_agree():
    rng = random.Random(13)
    for _ in range(15):
        rel, tr, dl = random_instance(rng, rng.randint(1, 4), deadline=40)
        assert oracles.oprd(rel, tr, dl)[0] == oracles.oprd_orders(rel, tr, dl)


# --- result objects ---

def test_exact_result_invariants():
    with pytest.raises(ValueError):
        ExactResult(3, bound=2)
    with pytest.raises(ValueError):
        ExactResult(2, status="optimal", bound=3)
    ExactResult(2, status="incumbent_with_bound", bound=3)


def test_tour_duration_matches_oracle():
    tr = line(3)
    assert tour_duration((3, 1, 2), tr) == oracles.route_cost((3, 1, 2), tr) == 8


# --- GSEC separation ---

def test_gsec_two_cycle():
    x = {(1, 2): 1.0, (2, 1): 1.0}
    cuts = separate_gsec(x, {1: 1.0, 2: 1.0})
    assert len(cuts) == 1 and cuts[0].nodes == {1, 2}


def test_gsec_connected_tour():
    x = {(0, 1): 1.0, (1, 2): 1.0, (2, 0): 1.0}
    assert separate_gsec(x, {0: 1.0, 1: 1.0, 2: 1.0}) == []


def test_gsec_two_detached_cycles():
    x = {(0, 5): 1.0, (5, 0): 1.0, (1, 2): 1.0, (2, 1): 1.0, (3, 4): 1.0, (4, 3): 1.0}
    y = {i: 1.0 for i in range(6)}
    cuts = separate_gsec(x, y)
    assert [set(c.nodes) for c in cuts] == [{1, 2}, {3, 4}]
    for c in cuts:
        assert c.violated(x, y)


def test_gsec_fractional_finds_weak_component():
    x = {(0, 1): 0.5, (1, 0): 0.5, (2, 3): 0.9, (3, 2): 0.9, (1, 2): 0.1, (2, 1): 0.1}
    y = {0: 1.0, 1: 1.0, 2: 1.0, 3: 1.0}
    cuts = separate_gsec(x, y, fractional=True)
    assert any({2, 3} <= set(c.nodes) for c in cuts)
    assert all(c.violated(x, y) for c in cuts)


@given(st.lists(st.tuples(st.integers(1, 8), st.integers(1, 8)), max_size=12))
@settings(max_examples=60, deadline=None)
def test_gsec_cuts_match_component_oracle(edges):
    x = {(a, b): 1.0 for a, b in edges if a != b}
    nodes = {v for e in x for v in e}
    y = {v: 1.0 for v in nodes}
    cuts = separate_gsec(x, y)
    # union-find oracle over detached components of size >= 2
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v

    for a, b in x:
        parent[find(a)] = find(b)
    groups = {}
    for v in nodes:
        groups.setdefault(find(v), set()).add(v)
    expected = sorted((g for g in groups.values() if len(g) >= 2), key=min)
    assert [set(c.nodes) for c in cuts] == expected


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_ub_trips_schedule_always_feasible(seed):
    rel, tr, dl = random_instance(random.Random(seed), 6)
    res = ub_trips(rel, tr, dl)
    assert check_schedule(res.trips, rel, tr, dl) == res.value
    assert solve_oprd_perfect(rel, tr, dl, max(res.value, 1), warm_start=res.trips).value >= res.value
