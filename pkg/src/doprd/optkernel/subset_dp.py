"""Layered Held-Karp dynamic programme over customer subsets.

Labels (subset, last customer) are generated one cardinality layer at a time
and discarded as soon as the path plus the return leg exceeds the budget.
With the triangle inequality this pruning is exact: extending a path never
shortens its closing tour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Layer:
    masks: np.ndarray  # sorted int64 subset masks
    cost: np.ndarray  # (len(masks), n) path cost from the depot ending at each customer
    pred: np.ndarray | None  # (len(masks), n) predecessor customer index, -1 = depot


def run_layers(dist: np.ndarray, budget: float = np.inf, keep: bool = True, max_size: int | None = None):
    """Yield successive layers; `dist` is indexed depot=0, customers 1..n."""
    d = np.asarray(dist, dtype=float)
    n = d.shape[0] - 1
    if n == 0:
        return
    back = d[1:, 0]
    first = d[0, 1:].copy()
    first[first + back > budget] = np.inf
    ok = np.isfinite(first)
    idx = np.flatnonzero(ok)
    masks = (np.int64(1) << idx.astype(np.int64))
    cost = np.full((len(idx), n), np.inf)
    cost[np.arange(len(idx)), idx] = first[idx]
    pred = np.full((len(idx), n), -1, dtype=np.int16) if keep else None
    layer = Layer(masks, cost, pred)
    size = 1
    inner = d[1:, 1:]
    while len(layer.masks):
        yield layer
        if size == n or (max_size is not None and size >= max_size):
            return
        new_masks, new_vals = [], []
        for j in range(n):
            bit = np.int64(1) << np.int64(j)
            rows = np.flatnonzero((layer.masks & bit) == 0)
            if not len(rows):
                continue
            cand = layer.cost[rows] + inner[:, j][None, :]
            arg = cand.argmin(axis=1)
            val = cand[np.arange(len(rows)), arg]
            feas = val + back[j] <= budget
            if not feas.any():
                continue
            rows, arg, val = rows[feas], arg[feas], val[feas]
            new_masks.append(layer.masks[rows] | bit)
            new_vals.append((j, val, arg))
        if not new_masks:
            return
        masks = np.unique(np.concatenate(new_masks))
        cost = np.full((len(masks), n), np.inf)
        pred = np.full((len(masks), n), -1, dtype=np.int16) if keep else None
        for (j, val, arg), nm in zip(new_vals, new_masks):
            pos = np.searchsorted(masks, nm)
            cost[pos, j] = val
            if keep:
                pred[pos, j] = arg
        layer = Layer(masks, cost, pred)
        size += 1


def mask_nodes(mask: int) -> tuple[int, ...]:
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return tuple(out)


def _backtrack(layers: list[Layer], mask: int, last: int) -> list[int]:
    path = []
    for layer in reversed(layers):
        row = int(np.searchsorted(layer.masks, mask))
        path.append(last)
        prev = int(layer.pred[row, last])
        mask ^= 1 << last
        last = prev
    path.reverse()
    return path


@dataclass(frozen=True)
class ProfileEntry:
    size: int
    duration: float
    nodes: tuple[int, ...]  # customer indices (0-based), in visiting order


def profile(dist: np.ndarray, budget: float = np.inf, max_size: int | None = None) -> list[ProfileEntry]:
    """Shortest closed tour for every feasible subset size.

    Among equally short tours of one size the lexicographically smallest node
    set wins, so callers that order nodes by id get id-lexicographic ties.
    Entry 0 is the empty tour.
    """
    d = np.asarray(dist, dtype=float)
    back = d[1:, 0]
    out = [ProfileEntry(0, 0.0, ())]
    layers: list[Layer] = []
    for layer in run_layers(d, budget, keep=True, max_size=max_size):
        layers.append(layer)
        tour = layer.cost + back[None, :]
        best_last = tour.argmin(axis=1)
        per_mask = tour[np.arange(len(layer.masks)), best_last]
        lo = per_mask.min()
        if lo > budget:
            continue
        tied = np.flatnonzero(per_mask == lo)
        row = min(tied, key=lambda r: mask_nodes(int(layer.masks[r])))
        path = _backtrack(layers, int(layer.masks[row]), int(best_last[row]))
        out.append(ProfileEntry(len(path), float(lo), tuple(path)))
    return out


def subset_tour_costs(dist: np.ndarray, budget: float = np.inf) -> dict[int, float]:
    """Optimal closed-tour duration of every subset whose tour fits the budget."""
    d = np.asarray(dist, dtype=float)
    back = d[1:, 0]
    out: dict[int, float] = {}
    for layer in run_layers(d, budget, keep=False):
        per_mask = (layer.cost + back[None, :]).min(axis=1)
        for m, v in zip(layer.masks.tolist(), per_mask.tolist()):
            if v <= budget:
                out[m] = v
    return out
