import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doprd.instance import generate_instance, load_solomon, make_instance
from doprd.mdp import (
    WAIT,
    Dispatch,
    InfeasibleAction,
    SimConfig,
    apply_action,
    initial_state,
    replay,
    simulate,
)
from doprd.optkernel import solve_oprd_perfect
from doprd.policies import Me, Mh


def _mixed():
    rows = [(1, 1, 0, 0.0), (2, 2, 0, 7.0), (3, 0, 3, 0.0), (4, 0, 5, 30.0)]
    return make_instance((0, 0), rows, 50)


def test_initial_all_available():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0), (2, 2, 0, 0.0)], 10)
    s = initial_state(inst)
    assert s.known == {1, 2} and len(s.unknown) == 0 and s.t_e == 0


def test_initial_none_available():
    inst = make_instance((0, 0), [(1, 1, 0, 3.0), (2, 2, 0, 4.0)], 10)
    assert initial_state(inst).known == set()


def test_initial_mixed_partition():
    inst = _mixed()
    s = initial_state(inst)
    assert s.known == {c.id for c in inst.customers if c.true_release == 0}
    assert set(s.unknown.ids()) == {c.id for c in inst.customers if c.true_release > 0}
    assert s.served == set()


def test_wait_until_arrival():
    out = apply_action(_mixed(), initial_state(_mixed()), WAIT, phi=10)
    assert out.next_state.t_e == 7
    assert 2 in out.next_state.known and 2 not in out.next_state.unknown
    assert out.reward == 0


def test_wait_without_arrivals():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0)], 50)
    out = apply_action(inst, initial_state(inst), WAIT, phi=10)
    assert out.next_state.t_e == 10


def test_dispatch_duration():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0), (2, 2, 0, 0.0), (3, 0, 9, 2.0)], 50)
    s = apply_action(inst, initial_state(inst), WAIT, phi=3).next_state
    assert s.t_e == 2
    s = s.__class__(3.0, s.known, s.unknown, s.served, s.epoch_index)
    out = apply_action(inst, s, Dispatch((1, 2)))
    assert out.next_state.t_e == 7
    assert out.reward == 2 and {1, 2} <= out.next_state.served
    assert out.elapsed == 4


def test_arrivals_during_route_and_at_return():
    inst = make_instance((0, 0), [(1, 2, 0, 0.0), (2, 0, 7, 3.0), (3, 0, 8, 4.0), (4, 0, 9, 5.0)], 50)
    out = apply_action(inst, initial_state(inst), Dispatch((1,)))
    # returns at 4: releases 3 and 4 arrived, 5 has not
    assert out.next_state.known == {2, 3}


def test_wait_clamps_at_deadline():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0)], 5)
    out = apply_action(inst, initial_state(inst), WAIT, phi=10)
    assert out.next_state.t_e == 5 and out.terminal


def test_infeasible_actions():
    inst = _mixed()
    s = initial_state(inst)
    with pytest.raises(InfeasibleAction):
        apply_action(inst, s, Dispatch((2,)))
    tight = make_instance((0, 0), [(1, 5, 0, 0.0)], 9)
    with pytest.raises(InfeasibleAction):
        apply_action(tight, initial_state(tight), Dispatch((1,)))


def test_dispatch_validates_route():
    with pytest.raises(ValueError):
        Dispatch(())
    with pytest.raises(ValueError):
        Dispatch((1, 1))


def test_single_customer_day():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0)], 2)
    res = simulate(inst, Me(), 0)
    assert res.total_served == 1 and res.status == "ok"
    assert res.return_time == 2


def test_empty_horizon():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0)], 0)
    for pol in (Me(), Mh()):
        assert simulate(inst, pol, 0).total_served == 0


def _gen(seed, n=12, delta=0.5):
    data = load_solomon("builtin:syn_r1", n)
    return generate_instance(data, 1.0, delta, 1.0, seed, horizon=400)


def test_mh_replay_is_identical():
    inst = _gen(3)
    a, b = simulate(inst, Mh(), 5), simulate(inst, Mh(), 5)
    strip = lambda r: [(s.epoch, s.t_e, s.action, s.reward) for s in r.trajectory]
    assert strip(a) == strip(b) and a.total_served == b.total_served


class _Bad:
    name = "bad"

    def decide(self, inst, state, rng):
        return Dispatch(tuple(sorted(state.unserved - state.known))[:1] or (999,))


def test_infeasible_policy_marks_failure():
    inst = make_instance((0, 0), [(1, 1, 0, 0.0), (2, 2, 0, 9.0)], 50)
    res = simulate(inst, _Bad(), 0)
    assert res.status == "failed" and "epoch" in res.diagnostic


class _RandomPolicy:
    """Picks a random feasible action: a random subset of knowns in random order, or Wait."""

    name = "random"

    def decide(self, inst, state, rng):
        tr = inst.id_travel()
        known = sorted(state.known)
        rng.shuffle(known)
        route = [i for i in known if rng.random() < 0.6]
        while route and state.t_e + tr.route_duration(route) > inst.deadline:
            route.pop()
        return Dispatch(tuple(route)) if route and rng.random() < 0.7 else WAIT


def _check_invariants(inst, res):
    assert res.status == "ok"
    assert sum(s.reward for s in res.trajectory) == res.total_served == len(res.served)
    clocks = [s.t_e for s in res.trajectory]
    assert all(a < b for a, b in zip(clocks, clocks[1:]))
    assert res.return_time is None or res.return_time <= inst.deadline
    bound = solve_oprd_perfect(inst.releases(), inst.id_travel(), inst.deadline)
    assert res.total_served <= bound.bound


@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.5, 1.0]))
@settings(max_examples=30, deadline=None)
def test_run_invariants_random_policy(seed, delta):
    inst = _gen(seed % 50, n=10, delta=delta)
    _check_invariants(inst, simulate(inst, _RandomPolicy(), seed))


@pytest.mark.parametrize("seed", range(4))
def test_run_invariants_myopic(seed):
    inst = _gen(seed)
    for pol in (Me(), Mh()):
        _check_invariants(inst, simulate(inst, pol, seed))


def test_dispatch_departs_only_with_released():
    inst = _gen(1)
    state = initial_state(inst)
    rng = np.random.default_rng(0)
    pol = _RandomPolicy()
    while state.t_e < inst.deadline and (state.known or len(state.unknown)):
        action = pol.decide(inst, state, rng) if state.known else WAIT
        if isinstance(action, Dispatch):
            assert all(inst.customer(i).true_release <= state.t_e for i in action.route)
        out = apply_action(inst, state, action)
        if out.terminal:
            break
        state = out.next_state


def test_replay_matches_manual_steps():
    inst = _mixed()
    s = replay(inst, [WAIT, Dispatch((1, 2))])
    assert s.served == {1, 2} and s.t_e == 11
    assert s.known == {3}
