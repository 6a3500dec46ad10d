"""End-to-end acceptance checks. Each test reports one PASS/FAIL line in the terminal summary."""

import random
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

import oracles
from conftest import ACCEPTANCE_LINES
from doprd.batch import brute_force_max_served, build_batches, opt_count
from doprd.cli import main
from doprd.harness import build_instances, load_config, run_benchmark, summarize
from doprd.instance import generate_instance, load_solomon, make_instance
from doprd.mdp import WAIT, Dispatch, apply_action, initial_state
from doprd.optkernel import Tour, check_schedule, solve_op, solve_oprd_perfect, solve_tsp, ub_trips
from doprd.policies import PolicyConfig, ScenarioSolution, consensus, mh_decide, pfa_decide, vfa_decide

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# 1 -----------------------------------------------------------------------

def test_c01_toy_batches():
    args = (10.0, {1, 2, 3}, {4: 14.0, 5: 14.0, 6: 15.0, 7: 15.0, 8: 15.0}, 16.0, 3, 1.0)
    build_batches(*args)
    times = []
    for _ in range(5):
        t = time.perf_counter()
        plan = build_batches(*args)
        times.append(time.perf_counter() - t)
    ok = (
        plan.n_batches == 3
        and [b.tau_start for b in plan.batches] == [15.0, 14.0, 13.0]
        and dict(plan.assignment) == {4: 2, 5: 2, 6: 1, 7: 1, 8: 1}
        and plan.spare == {2, 3}
        and min(times) < 1e-3
    )
    report(1, ok, f"toy plan reproduced, {min(times) * 1e3:.3f} ms")


# 2 -----------------------------------------------------------------------

def test_c02_batch_count_oracle():
    rng = random.Random(2024)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(200):
        n_known = rng.randint(0, 4)
        n_unknown = rng.randint(0, 12 - n_known)
        t_e = float(rng.randint(0, 10))
        rho = rng.choice([2, 3])
        t_d = float(rng.choice([1, 2, 3]))
        deadline = 30.0
        unknown = {100 + k: float(rng.randint(int(t_e) + 1, 30)) for k in range(n_unknown)}
        plan = build_batches(t_e, set(range(1, n_known + 1)), unknown, deadline, rho, t_d)
        got = opt_count(n_known, plan)
        want = brute_force_max_served(t_e, [t_e] * n_known + list(unknown.values()), deadline, rho, t_d)
        bad += got != want
    elapsed = time.perf_counter() - t0
    report(2, bad == 0 and elapsed < 30, f"{200 - bad}/200 configurations match, {elapsed:.1f} s")


# 3 and 4 ----------------------------------------------------------------

def _kernel_instance(rng):
    n = rng.randint(1, 8)
    pts = set()
    while len(pts) < n:
        p = (rng.randint(0, 20), rng.randint(0, 20))
        if p != (10, 10):
            pts.add(p)
    deadline = rng.choice([40, 60, 80])
    rows = [(i, x, y, float(rng.randint(0, deadline))) for i, (x, y) in enumerate(sorted(pts), 1)]
    inst = make_instance((10, 10), rows, deadline)
    return inst.releases(), inst.id_travel(), float(deadline), rng.randint(0, deadline)


@pytest.fixture(scope="module")
def kernel_suite():
    rng = random.Random(7)
    t0 = time.perf_counter()
    mismatches, prop1 = [], []
    for k in range(100):
        rel, tr, dl, budget = _kernel_instance(rng)
        ids = sorted(rel)
        if solve_tsp(ids, tr).duration != oracles.tsp(ids, tr):
            mismatches.append((k, "tsp"))
        if solve_op(ids, tr, budget).value != oracles.op(ids, tr, budget):
            mismatches.append((k, "op"))
        ub = ub_trips(rel, tr, dl)
        if ub.value != oracles.ub_trips(rel, tr, dl):
            mismatches.append((k, "ub_trips"))
        parcels, max_trips = oracles.oprd(rel, tr, dl)
        res = solve_oprd_perfect(rel, tr, dl, max(ub.value, 1), warm_start=ub.trips)
        if res.value != parcels or check_schedule(res.trips, rel, tr, dl) != parcels:
            mismatches.append((k, "oprd"))
        accepted = check_schedule(ub.trips, rel, tr, dl) == ub.value and res.value >= ub.value
        if ub.value < max_trips or not accepted:
            prop1.append(k)
    return mismatches, prop1, time.perf_counter() - t0


def test_c03_kernel_enumeration(kernel_suite):
    mismatches, _, elapsed = kernel_suite
    report(3, not mismatches and elapsed < 300, f"{len(mismatches)} mismatches over 100 instances, {elapsed:.1f} s")


def test_c04_trip_bound(kernel_suite):
    _, prop1, elapsed = kernel_suite
    report(4, not prop1 and elapsed < 300, f"{len(prop1)} violations of the trip bound or warm start")


# 5, 6 and 7 share one grid run ---------------------------------------------

@pytest.fixture(scope="module")
def grid():
    cfg = load_config(CONFIGS / "desk_grid.cfg")
    t0 = time.perf_counter()
    res = run_benchmark(cfg)
    return cfg, res, time.perf_counter() - t0


@pytest.mark.slow
def test_c05_competitive_bound(grid):
    _, res, _ = grid
    violations = 0
    for (name, _, _), run in res.runs.items():
        b = res.bounds[name]
        cap = b.value if b.status == "optimal" else b.bound
        violations += run.total_served > cap
    report(5, violations == 0 and res.ok, f"{violations} violations over {len(res.runs)} runs")


@pytest.mark.slow
def test_c06_policy_ordering(grid):
    _, res, elapsed = grid
    avg = {s["policy"]: s["gap_best_pct"] for s in summarize(res.rows, ["c"]) if s["c"] == "AVG"}
    runs = {s["policy"]: s["runs"] for s in summarize(res.rows, ["c"]) if s["c"] == "AVG"}
    ok = (
        all(runs[p] == 54 for p in ("pfa", "vfa", "me", "mh"))
        and avg["pfa"] <= avg["me"] - 3
        and avg["vfa"] <= avg["me"] - 3
        and avg["me"] < avg["mh"]
        and elapsed < 7200
    )
    detail = ", ".join(f"{p} {avg[p]:.2f}%" for p in ("pfa", "vfa", "me", "mh"))
    report(6, ok, f"gap to best: {detail}; {elapsed:.0f} s")


@pytest.mark.slow
def test_c07_pc_consistency(grid):
    cfg, res, _ = grid
    insts = {i.name: i for i in build_instances(cfg)}
    fired = bad = 0
    for (name, _, _), run in res.runs.items():
        inst = insts[name]
        for ev in run.pc_events:
            fired += 1
            ell = solve_op(ev["unserved"], inst.id_travel(), inst.deadline - ev["t_e"]).value
            bad += not (len(ev["route"]) == ev["ell"] == ell)
    report(7, bad == 0 and fired > 0, f"{fired} shortcut dispatches checked, {bad} violations")


# 8 -----------------------------------------------------------------------

def test_c08_bench_determinism(tmp_path):
    runner = CliRunner()
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        r = runner.invoke(main, ["bench", "--config", str(CONFIGS / "smoke.cfg"), "--out", str(out), "--normalize-time"])
        assert r.exit_code == 0, r.output
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    same = names == sorted(p.name for p in outs[1].iterdir()) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names
    )
    report(8, same, f"{len(names)} CSV files byte-identical across two runs")


# 9 -----------------------------------------------------------------------

def test_c09_consensus_examples():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0), (2, 2, 0, 0.0), (3, 0, 1, 0.0)], 50)
    tr = inst.id_travel()
    sol = lambda ids: ScenarioSolution(frozenset(ids), Tour(tuple(ids), 0.0), 0.0)
    known = frozenset({1, 2, 3})
    a = consensus([sol({1, 2}), sol({1, 2}), sol({1}), sol({3})], known, tr, 0, 50)
    b = consensus([sol(()), sol(()), sol(())], known, tr, 0, 50)
    c = consensus([sol({1}), sol({2})], known, tr, 0, 50)
    ok = (
        isinstance(a, Dispatch) and set(a.route) == {1, 2}
        and b == WAIT
        and isinstance(c, Dispatch) and set(c.route) == {1, 2}
    )
    report(9, ok, "consensus vote examples")


# 10 ----------------------------------------------------------------------

def _walk(rng, inst):
    state = initial_state(inst)
    for _ in range(rng.randint(0, 6)):
        action = mh_decide(inst, state) if rng.random() < 0.4 else WAIT
        out = apply_action(inst, state, action)
        if out.terminal:
            break
        state = out.next_state
    return state


def test_c10_single_scenario_coherence():
    rng = random.Random(10)
    data = load_solomon("builtin:syn_r1", 15)
    checked = differ = 0
    while checked < 50:
        inst = generate_instance(data, rng.choice([0.5, 1.0, 1.5]), rng.choice([0.0, 0.5, 1.0]),
                                 rng.choice([0.8, 1.2]), rng.randint(0, 10_000), horizon=400)
        state = _walk(rng, inst)
        if not state.known:
            continue
        cfg = PolicyConfig(rho=3, n_scenarios=1, pc_enabled=checked % 2 == 0)
        seed = rng.randint(0, 2**31)
        p = pfa_decide(inst, state, cfg, np.random.default_rng(seed))
        v = vfa_decide(inst, state, cfg, np.random.default_rng(seed))
        route = lambda a: frozenset(a.route) if isinstance(a, Dispatch) else frozenset()
        differ += route(p) != route(v)
        checked += 1
    report(10, differ == 0, f"{checked - differ}/{checked} states give the same route-0 set")
