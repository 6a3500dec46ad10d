"""Dispatch policies: scenario look-ahead (PFA, VFA), myopic baselines (ME, MH) and
the shortcut that detects when leaving immediately is provably optimal.

The look-ahead models value a route-0 choice as its size plus the discounted
number of requests the backward batch plan can still serve once the vehicle
is back. For a fixed route-0 size, a shorter tour never hurts the future
term, so both models are solved exactly by scanning the size/duration
profile of the known customers. A MILP backend solves the same models
directly and serves as a cross-check.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .batch import BatchPlan, bounding_box_area, build_batches, daganzo_duration
from .instance import Instance
from .mdp import WAIT, Action, Dispatch, State
from .optkernel import Tour, op_profile, op_reaches, solve_op, solve_tsp
from .optkernel import milp as _milp
from .optkernel import DP_LIMIT
from .uncertainty import Scenario, sample_scenarios

log = logging.getLogger(__name__)

TOL = 1e-9


@dataclass(frozen=True)
class PolicyConfig:
    rho: int = 15
    n_scenarios: int = 30
    gamma: float = 0.9
    phi: float = 10.0
    det_time_limit: float = 300.0
    sto_time_limit: float = 600.0
    myopic_time_limit: float = 600.0
    pc_known_frac: float = 0.25
    pc_time_frac: float = 0.75
    pc_enabled: bool = True
    t_d: float | None = None  # fixed batch duration; None = continuous approximation per epoch
    backend: str = "profile"  # or "milp"

    def __post_init__(self):
        for name in ("rho", "n_scenarios", "gamma", "phi", "det_time_limit", "sto_time_limit", "myopic_time_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma > 1:
            raise ValueError("gamma must not exceed 1")
        if not (0 <= self.pc_known_frac <= 1 and 0 <= self.pc_time_frac <= 1):
            raise ValueError("pc fractions must lie in [0, 1]")
        if self.t_d is not None and self.t_d <= 0:
            raise ValueError("t_d must be positive")
        if self.backend not in ("profile", "milp"):
            raise ValueError(f"unknown backend {self.backend!r}")


@dataclass(frozen=True)
class ScenarioSolution:
    route0: frozenset[int]
    tour: Tour
    objective: float
    z: Mapping[int, int] = field(default_factory=dict)
    w: Mapping[int, int] = field(default_factory=dict)  # known id -> batch index


# ---------------------------------------------------------------- helpers


def batch_duration(inst: Instance, state: State, config: PolicyConfig) -> float:
    if config.t_d is not None:
        return config.t_d
    area = bounding_box_area(inst.coords(i) for i in state.unserved)
    # a degenerate box (one customer or collinear points) would give zero-length batches
    return max(daganzo_duration(area, config.rho), 1.0)


def future_value(plan: BatchPlan, n_left: int, tau_end: float) -> tuple[float, int]:
    """Requests the plan serves when route 0 ends at `tau_end` and `n_left` knowns remain."""
    m = plan.executable(tau_end)
    return plan.unknown_served(m) + min(n_left, plan.spare_capacity(m)), m


def _assign_spare(plan: BatchPlan, left: Sequence[int], m: int) -> dict[int, int]:
    w = {}
    it = iter(sorted(left))
    for b in plan.batches[:m]:
        if b.index not in plan.spare:
            continue
        for _ in range(plan.rho - b.rho_k):
            i = next(it, None)
            if i is None:
                return w
            w[i] = b.index
    return w


def _best_size(values: Sequence[float]) -> int:
    """Largest index attaining the maximum (ties go to larger route 0)."""
    best = 0
    for s, v in enumerate(values):
        if v >= values[best] - TOL:
            best = s
    return best


def _profile(inst: Instance, state: State) -> list[Tour]:
    return op_profile(state.known, inst.id_travel(), inst.deadline - state.t_e)


def scenario_plans(inst: Instance, state: State, scenarios: Sequence[Scenario], config: PolicyConfig) -> list[BatchPlan]:
    t_d = batch_duration(inst, state, config)
    return [build_batches(state.t_e, state.known, sc.realized, inst.deadline, config.rho, t_d) for sc in scenarios]


# ---------------------------------------------------------------- partial characterization


@dataclass(frozen=True)
class PcOutcome:
    action: Dispatch | None
    skipped: bool
    ell: int | None = None
    ell_known: int | None = None


def pc_evaluate(inst: Instance, state: State, config: PolicyConfig) -> PcOutcome:
    """Check whether dispatching the best known-only tour now is provably optimal.

    The best tour over all unserved customers (releases ignored) bounds what
    any policy can still deliver. When the known customers alone attain that
    bound, leaving now with them is optimal.
    """
    if not config.pc_enabled or not state.known:
        return PcOutcome(None, True)
    budget = inst.deadline - state.t_e
    unserved = state.unserved
    if len(state.known) < config.pc_known_frac * len(unserved) and budget > config.pc_time_frac * inst.deadline:
        return PcOutcome(None, True)
    travel = inst.id_travel()
    best_known = op_profile(state.known, travel, budget)[-1]
    ell_known = len(best_known)
    # the unrestricted optimum equals ell_known unless a larger tour exists
    if ell_known == 0 or op_reaches(unserved, travel, budget, ell_known + 1):
        return PcOutcome(None, False, None, ell_known)
    return PcOutcome(Dispatch(best_known.nodes), False, ell_known, ell_known)


def pc_check(inst: Instance, state: State, config: PolicyConfig | None = None) -> Dispatch | None:
    return pc_evaluate(inst, state, config or PolicyConfig()).action


# ---------------------------------------------------------------- deterministic model


def det_ilp_solve(
    inst: Instance,
    state: State,
    plan: BatchPlan,
    config: PolicyConfig,
    profile: Sequence[Tour] | None = None,
) -> ScenarioSolution:
    """Optimal route 0 against one scenario's batch plan.

    Ties go to the larger route 0, then the shorter tour, then the
    lexicographically smallest id set.
    """
    if config.backend == "milp":
        return stochastic_milp(inst, state, [plan], [1.0], config, config.det_time_limit)
    profile = profile if profile is not None else _profile(inst, state)
    n_known = len(state.known)
    values, ms = [], []
    for tour in profile:
        f, m = future_value(plan, n_known - len(tour), state.t_e + tour.duration)
        values.append(len(tour) + config.gamma * f)
        ms.append(m)
    s = _best_size(values)
    tour = profile[s]
    left = sorted(state.known - set(tour.nodes))
    z = {b.index: int(b.index <= ms[s]) for b in plan.batches}
    return ScenarioSolution(frozenset(tour.nodes), tour, values[s], z, _assign_spare(plan, left, ms[s]))


def consensus(
    solutions: Sequence[ScenarioSolution],
    known: frozenset[int],
    travel,
    t_e: float,
    deadline: float,
) -> Action:
    """Dispatch the customers that at least half of the scenario optima send now."""
    if not solutions:
        raise ValueError("consensus needs at least one scenario solution")
    votes = Counter(i for sol in solutions for i in sol.route0)
    chosen = sorted(i for i, f in votes.items() if 2 * f >= len(solutions) and i in known)
    if not chosen:
        return WAIT
    budget = deadline - t_e
    tour = solve_tsp(chosen, travel, exact_bound=DP_LIMIT)
    if tour.duration > budget + TOL:
        res = solve_op(chosen, travel, budget)
        if res.value == 0:
            return WAIT
        tour = res.tour
    return Dispatch(tour.nodes)


# ---------------------------------------------------------------- stochastic model


def vfa_solve(
    inst: Instance,
    state: State,
    plans: Sequence[BatchPlan],
    probs: Sequence[float],
    config: PolicyConfig,
    profile: Sequence[Tour] | None = None,
) -> ScenarioSolution:
    """Route 0 maximizing its size plus the discounted expected batch service."""
    if config.backend == "milp":
        return stochastic_milp(inst, state, plans, probs, config, config.sto_time_limit)
    profile = profile if profile is not None else _profile(inst, state)
    n_known = len(state.known)
    values = []
    for tour in profile:
        tau = state.t_e + tour.duration
        exp = sum(p * future_value(plan, n_known - len(tour), tau)[0] for plan, p in zip(plans, probs))
        values.append(len(tour) + config.gamma * exp)
    s = _best_size(values)
    return ScenarioSolution(frozenset(profile[s].nodes), profile[s], values[s])


def stochastic_milp(
    inst: Instance,
    state: State,
    plans: Sequence[BatchPlan],
    probs: Sequence[float],
    config: PolicyConfig,
    time_limit: float,
) -> ScenarioSolution:
    """Direct MILP of the look-ahead model; one plan gives the deterministic model."""
    travel = inst.id_travel()
    known = sorted(state.known)
    horizon = inst.deadline - state.t_e
    m = _milp.Model(maximize=True)
    rv = _milp.add_route(m, known, prize=1.0)
    dur = {v: float(travel[i, j]) for (i, j), v in rv.x.items()}
    m.add(dur, hi=horizon)
    for plan, p in zip(plans, probs):
        zs = [m.var(config.gamma * p * b.rho_k) for b in plan.batches]
        for a, b in zip(zs, zs[1:]):
            m.add({b: 1.0, a: -1.0}, hi=0.0)
        for b, z in zip(plan.batches, zs):
            # a batch may run only once route 0 is back
            slack = b.tau_start - state.t_e
            if slack < horizon:
                row = dict(dur)
                row[z] = horizon
                m.add(row, hi=horizon + slack)
        serve = {i: {rv.y[i]: 1.0} for i in known}
        for b, z in zip(plan.batches, zs):
            if b.index not in plan.spare or not known:
                continue
            cap = {z: -float(plan.rho - b.rho_k)}
            for i in known:
                w = m.var(config.gamma * p)
                cap[w] = 1.0
                serve[i][w] = 1.0
            m.add(cap, hi=0.0)
        for row in serve.values():
            m.add(row, hi=1.0)
    res = _milp.branch_and_cut(m, [rv], time_limit)
    if res.solution is None:
        log.warning("look-ahead MILP found no solution within %.1fs; waiting", time_limit)
        return ScenarioSolution(frozenset(), Tour((), 0.0), 0.0)
    route = rv.route(res.solution)
    return ScenarioSolution(frozenset(route), Tour(tuple(route), travel.route_duration(route)), float(res.value))


# ---------------------------------------------------------------- policies


class Pfa:
    name = "pfa"

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()
        self.last_pc: dict | None = None

    def decide(self, inst: Instance, state: State, rng: np.random.Generator) -> Action:
        return _lookahead(self, inst, state, rng, joint=False)


class Vfa(Pfa):
    name = "vfa"

    def decide(self, inst: Instance, state: State, rng: np.random.Generator) -> Action:
        return _lookahead(self, inst, state, rng, joint=True)


def _lookahead(policy: Pfa, inst: Instance, state: State, rng: np.random.Generator, joint: bool) -> Action:
    cfg = policy.config
    policy.last_pc = None
    if not state.known:
        return WAIT
    pc = pc_evaluate(inst, state, cfg)
    if pc.action is not None:
        policy.last_pc = {
            "t_e": state.t_e, "known": sorted(state.known), "unserved": sorted(state.unserved),
            "route": list(pc.action.route), "ell": pc.ell,
        }
        return pc.action
    scenarios = sample_scenarios(state.unknown, state.t_e, cfg.n_scenarios, rng)
    plans = scenario_plans(inst, state, scenarios, cfg)
    profile = _profile(inst, state) if cfg.backend == "profile" else None
    try:
        if joint:
            sol = vfa_solve(inst, state, plans, [sc.probability for sc in scenarios], cfg, profile)
            return Dispatch(sol.tour.nodes) if sol.route0 else WAIT
        sols = [det_ilp_solve(inst, state, plan, cfg, profile) for plan in plans]
        return consensus(sols, state.known, inst.id_travel(), state.t_e, inst.deadline)
    except (RuntimeError, TimeoutError) as exc:
        log.warning("%s solver failure at t=%s: %s; waiting", policy.name, state.t_e, exc)
        return WAIT


def me_decide(inst: Instance, state: State, config: PolicyConfig | None = None) -> Action:
    """Serve as many known parcels as one tour allows, right now."""
    if not state.known:
        return WAIT
    travel = inst.id_travel()
    budget = inst.deadline - state.t_e
    ids = sorted(state.known)
    if len(ids) <= DP_LIMIT:
        tour = solve_tsp(ids, travel, exact_bound=DP_LIMIT)
        if tour.duration <= budget + TOL:
            return Dispatch(tour.nodes)
    tl = (config or PolicyConfig()).myopic_time_limit
    res = solve_op(ids, travel, budget, time_limit=tl)
    return Dispatch(res.tour.nodes) if res.value else WAIT


def mh_decide(inst: Instance, state: State) -> Action:
    """Nearest-neighbour route over the known parcels, cut where it would miss the deadline."""
    if not state.known:
        return WAIT
    travel = inst.id_travel()
    budget = inst.deadline - state.t_e
    left = set(state.known)
    route: list[int] = []
    cur, spent = 0, 0.0
    while left:
        nxt = min(left, key=lambda j: (travel[cur, j], j))
        if spent + travel[cur, nxt] + travel[nxt, 0] > budget + TOL:
            break
        spent += travel[cur, nxt]
        route.append(nxt)
        left.remove(nxt)
        cur = nxt
    return Dispatch(tuple(route)) if route else WAIT


class Me:
    name = "me"

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()

    def decide(self, inst: Instance, state: State, rng: np.random.Generator) -> Action:
        return me_decide(inst, state, self.config)


class Mh:
    name = "mh"

    def __init__(self, config: PolicyConfig | None = None):
        self.config = config or PolicyConfig()

    def decide(self, inst: Instance, state: State, rng: np.random.Generator) -> Action:
        return mh_decide(inst, state)


POLICIES = {"pfa": Pfa, "vfa": Vfa, "me": Me, "mh": Mh}


def make_policy(name: str, config: PolicyConfig | None = None):
    try:
        return POLICIES[name.lower()](config)
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None


def pfa_decide(inst: Instance, state: State, config: PolicyConfig, rng: np.random.Generator) -> Action:
    return Pfa(config).decide(inst, state, rng)


def vfa_decide(inst: Instance, state: State, config: PolicyConfig, rng: np.random.Generator) -> Action:
    return Vfa(config).decide(inst, state, rng)
