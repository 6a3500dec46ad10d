"""The dispatching environment: states, actions, transitions and the simulation loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .instance import Instance
from .uncertainty import STREAM_SCENARIOS, EstimateSet, initial_estimates, update_estimates

log = logging.getLogger(__name__)

EPS = 1e-9


class InfeasibleAction(ValueError):
    pass


@dataclass(frozen=True)
class Wait:
    def __str__(self) -> str:
        return "wait"


@dataclass(frozen=True)
class Dispatch:
    route: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "route", tuple(self.route))
        if not self.route:
            raise InfeasibleAction("dispatch route must be non-empty")
        if len(set(self.route)) != len(self.route):
            raise InfeasibleAction("dispatch route repeats a customer")

    def __str__(self) -> str:
        return "dispatch " + "-".join(map(str, self.route))


Action = Wait | Dispatch
WAIT = Wait()


@dataclass(frozen=True)
class State:
    t_e: float
    known: frozenset[int]
    unknown: EstimateSet
    served: frozenset[int]
    epoch_index: int = 0

    @property
    def unserved(self) -> frozenset[int]:
        return self.known | frozenset(self.unknown.items)


@dataclass(frozen=True)
class TransitionOutcome:
    next_state: State
    reward: int
    elapsed: float
    terminal: bool = False


@dataclass(frozen=True)
class Step:
    epoch: int
    t_e: float
    action: str
    reward: int
    wall_ms: float
    pc_fired: bool = False
    info: dict = field(default_factory=dict, compare=False)


@dataclass
class SimulationResult:
    instance_id: str
    policy_id: str
    seed: int
    total_served: int = 0
    served: frozenset[int] = frozenset()
    trajectory: list[Step] = field(default_factory=list)
    return_time: float = 0.0
    status: str = "ok"
    diagnostic: str = ""
    pc_events: list[dict] = field(default_factory=list)
    runtime_s: float = 0.0


class Policy(Protocol):
    name: str

    def decide(self, inst: Instance, state: State, rng: np.random.Generator) -> Action: ...


@dataclass(frozen=True)
class SimConfig:
    phi: float = 10.0
    estimate_rate: float = 1.0
    max_epochs: int = 100_000


def initial_state(inst: Instance) -> State:
    known = frozenset(c.id for c in inst.customers if c.true_release == 0)
    return State(0.0, known, initial_estimates(inst), frozenset(), 0)


def check_action(inst: Instance, state: State, action: Action) -> float:
    """Return the route duration of a feasible action, raise InfeasibleAction otherwise."""
    if isinstance(action, Wait):
        return 0.0
    if not isinstance(action, Dispatch):
        raise InfeasibleAction(f"unknown action {action!r}")
    bad = [i for i in action.route if i not in state.known]
    if bad:
        raise InfeasibleAction(f"route contains customers not at the depot: {bad}")
    dur = inst.id_travel().route_duration(action.route)
    if state.t_e + dur > inst.deadline + EPS:
        raise InfeasibleAction(f"route ends at {state.t_e + dur} after the deadline {inst.deadline}")
    return dur


def _arrivals(inst: Instance, unknown: EstimateSet, lo: float, hi: float) -> list[int]:
    """Unknown customers whose true release lies in (lo, hi], in (release, id) order."""
    out = [(inst.customer(i).true_release, i) for i in unknown.items]
    return [i for r, i in sorted(out) if lo < r <= hi + EPS]


def _next_arrival(inst: Instance, unknown: EstimateSet) -> float | None:
    rs = [inst.customer(i).true_release for i in unknown.items]
    return min(rs) if rs else None


def apply_action(inst: Instance, state: State, action: Action, phi: float = 10.0, rate: float = 1.0) -> TransitionOutcome:
    """Advance the world by one decision epoch using the true release dates."""
    dur = check_action(inst, state, action)
    deadline = inst.deadline
    if isinstance(action, Dispatch):
        t_next = state.t_e + dur
        route = frozenset(action.route)
        known = state.known - route
        served = state.served | route
        reward = len(route)
    else:
        t_p = _next_arrival(inst, state.unknown)
        t_next = state.t_e + phi if t_p is None else min(t_p, state.t_e + phi)
        known, served, reward = state.known, state.served, 0
    terminal = False
    if t_next >= deadline:
        t_next = float(deadline)
        terminal = True
    arrived = _arrivals(inst, state.unknown, state.t_e, t_next)
    unknown = update_estimates(inst, state.unknown, t_next, rate)
    nxt = State(float(t_next), known | frozenset(arrived), unknown, served, state.epoch_index + 1)
    return TransitionOutcome(nxt, reward, t_next - state.t_e, terminal)


def nothing_left(inst: Instance, state: State) -> bool:
    """True when no unserved parcel can still be delivered before the deadline."""
    tr = inst.id_travel()
    for i in state.unserved:
        depart = max(state.t_e, inst.customer(i).true_release)
        if depart + tr[0, i] + tr[i, 0] <= inst.deadline + EPS:
            return False
    return True


def simulate(
    inst: Instance,
    policy: Policy,
    seed: int,
    config: SimConfig | None = None,
    state: State | None = None,
) -> SimulationResult:
    """Run one day. Epochs with an empty depot are skipped without consulting the policy."""
    cfg = config or SimConfig()
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_SCENARIOS,)))
    state = state or initial_state(inst)
    res = SimulationResult(inst.name, policy.name, seed, served=state.served)
    wall0 = time.perf_counter()
    total = 0
    while state.epoch_index < cfg.max_epochs:
        if state.t_e >= inst.deadline or nothing_left(inst, state):
            break
        if not state.known:
            # nothing to decide until the next parcel arrives
            t_p = _next_arrival(inst, state.unknown)
            if t_p is None or t_p >= inst.deadline:
                break
            out = apply_action(inst, state, WAIT, phi=max(t_p - state.t_e, 0.0), rate=cfg.estimate_rate)
            state = out.next_state
            continue
        t0 = time.perf_counter()
        try:
            action = policy.decide(inst, state, rng)
            out = apply_action(inst, state, action, cfg.phi, cfg.estimate_rate)
        except InfeasibleAction as exc:
            res.status = "failed"
            res.diagnostic = f"epoch {state.epoch_index} at t={state.t_e}: {exc}"
            log.error("%s/%s seed %d: %s", inst.name, policy.name, seed, res.diagnostic)
            break
        ms = (time.perf_counter() - t0) * 1000.0
        fired = getattr(policy, "last_pc", None)
        if fired is not None:
            res.pc_events.append(fired)
        res.trajectory.append(Step(state.epoch_index, state.t_e, str(action), out.reward, ms, fired is not None))
        total += out.reward
        state = out.next_state
        if isinstance(action, Dispatch):
            res.return_time = state.t_e
        if out.terminal:
            break
    res.total_served = total
    res.served = state.served
    res.runtime_s = time.perf_counter() - wall0
    return res


def replay(inst: Instance, actions: Sequence[Action], phi: float = 10.0) -> State:
    """Apply a fixed action sequence from the initial state (used to build test states)."""
    state = initial_state(inst)
    for a in actions:
        state = apply_action(inst, state, a, phi).next_state
    return state
