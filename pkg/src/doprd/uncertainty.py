"""Release-date estimates for parcels not yet at the depot, and scenario sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .instance import Instance, Mode

# rng stream labels; every consumer derives its own stream from the run seed
STREAM_WORLD = 0
STREAM_SCENARIOS = 1


@dataclass(frozen=True)
class Estimate:
    mean: float
    std: float
    dynamic: bool = False


@dataclass(frozen=True)
class EstimateSet:
    """Snapshot of the release-date distributions of unknown customers at clock `t`."""

    t: float
    items: Mapping[int, Estimate]

    def __contains__(self, cid: int) -> bool:
        return cid in self.items

    def __len__(self) -> int:
        return len(self.items)

    def ids(self) -> list[int]:
        return sorted(self.items)


@dataclass(frozen=True)
class Scenario:
    realized: Mapping[int, float]
    probability: float


def initial_estimates(inst: Instance) -> EstimateSet:
    items = {
        c.id: Estimate(c.estimate_mean, c.estimate_std, c.mode is Mode.DYNAMIC)
        for c in inst.customers
        if c.true_release > 0
    }
    return EstimateSet(0.0, items)


def update_estimates(inst: Instance, est: EstimateSet, t: float, rate: float = 1.0) -> EstimateSet:
    """Refresh estimates at clock `t`.

    Static customers keep their epoch-0 parameters. For a dynamic customer with
    true release R, the mean moves linearly from its epoch-0 value to R and the
    std shrinks linearly to zero, both reaching the truth at t = R / rate.
    Customers whose parcel has arrived (R <= t) are dropped.
    """
    if t < est.t:
        raise ValueError(f"clock moved backwards: {t} < {est.t}")
    items = {}
    for cid, e in est.items.items():
        c = inst.customer(cid)
        r = c.true_release
        if r <= t:
            continue
        if e.dynamic:
            frac = min(1.0, rate * t / r)
            items[cid] = Estimate(
                c.estimate_mean + (r - c.estimate_mean) * frac,
                c.estimate_std * (1.0 - frac),
                True,
            )
        else:
            items[cid] = e
    return EstimateSet(float(t), items)


def sample_scenarios(
    est: EstimateSet, t_e: float, count: int, rng: np.random.Generator
) -> list[Scenario]:
    """Draw `count` equally likely realizations of the unknown release dates.

    Draws falling before the sampling clock are clamped to it.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    ids = est.ids()
    p = 1.0 / count
    if not ids:
        return [Scenario({}, p) for _ in range(count)]
    means = np.array([est.items[i].mean for i in ids])
    stds = np.array([est.items[i].std for i in ids])
    draws = rng.normal(means, stds, size=(count, len(ids)))
    draws = np.maximum(draws, t_e)
    return [Scenario(dict(zip(ids, row.tolist())), p) for row in draws]
