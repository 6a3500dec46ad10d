"""Small modelling layer over HiGHS (scipy) with lazy GSEC separation.

Subtour elimination constraints are added when an integer solution contains
a component detached from the depot, after which the model is re-solved.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_array

from .gsec import GsecCut, separate_gsec


class Model:
    def __init__(self, maximize: bool = True):
        self.maximize = maximize
        self.obj: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[int] = []
        self.rows: list[tuple[dict[int, float], float, float]] = []

    def var(self, obj: float = 0.0, lb: float = 0.0, ub: float = 1.0, integer: bool = True) -> int:
        self.obj.append(obj)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(1 if integer else 0)
        return len(self.obj) - 1

    def add(self, coefs: dict[int, float], lo: float = -np.inf, hi: float = np.inf) -> None:
        self.rows.append((coefs, lo, hi))

    def solve(self, time_limit: float | None = None):
        c = np.array(self.obj, dtype=float)
        if self.maximize:
            c = -c
        r, col, val, lo, hi = [], [], [], [], []
        for k, (coefs, l, h) in enumerate(self.rows):
            for j, v in coefs.items():
                r.append(k)
                col.append(j)
                val.append(v)
            lo.append(l)
            hi.append(h)
        cons = []
        if self.rows:
            a = coo_array((val, (r, col)), shape=(len(self.rows), len(c))).tocsr()
            cons = [LinearConstraint(a, lo, hi)]
        opts = {"disp": False, "mip_rel_gap": 0.0}
        if time_limit is not None:
            opts["time_limit"] = max(float(time_limit), 0.01)
        res = milp(
            c, constraints=cons, integrality=np.array(self.integer),
            bounds=Bounds(self.lb, self.ub), options=opts,
        )
        x = None if res.x is None else np.asarray(res.x)
        sign = -1.0 if self.maximize else 1.0
        fun = None if res.fun is None else sign * res.fun
        bound = getattr(res, "mip_dual_bound", None)
        if bound is not None and np.isfinite(bound):
            bound = sign * bound
        else:
            bound = None
        return res.status, x, fun, bound


@dataclass
class RouteVars:
    """Arc and visit variables of one route over a node set containing the depot (0)."""

    x: dict[tuple[int, int], int] = field(default_factory=dict)
    y: dict[int, int] = field(default_factory=dict)

    def values(self, sol: np.ndarray):
        xv = {a: float(sol[v]) for a, v in self.x.items()}
        yv = {i: float(sol[v]) for i, v in self.y.items()}
        return xv, yv

    def route(self, sol: np.ndarray) -> list[int]:
        succ = {i: j for (i, j), v in self.x.items() if sol[v] > 0.5}
        out = []
        cur = succ.get(0)
        while cur is not None and cur != 0:
            out.append(cur)
            cur = succ.get(cur)
        return out


def add_route(m: Model, nodes: list[int], prize: float = 0.0, size2: bool = True) -> RouteVars:
    """Degree-constrained route variables; `nodes` excludes the depot."""
    rv = RouteVars()
    allv = [0, *nodes]
    rv.y[0] = m.var()
    for i in nodes:
        rv.y[i] = m.var(prize)
    for i in allv:
        for j in allv:
            if i != j:
                rv.x[i, j] = m.var()
    for i in allv:
        out = {rv.x[i, j]: 1.0 for j in allv if j != i}
        inn = {rv.x[j, i]: 1.0 for j in allv if j != i}
        out[rv.y[i]] = -1.0
        inn[rv.y[i]] = -1.0
        m.add(out, 0.0, 0.0)
        m.add(inn, 0.0, 0.0)
    if nodes:
        row = {rv.y[i]: 1.0 for i in nodes}
        row[rv.y[0]] = -float(len(nodes))
        m.add(row, hi=0.0)
    if size2:
        for a in nodes:
            for b in nodes:
                if a < b:
                    m.add({rv.x[a, b]: 1.0, rv.x[b, a]: 1.0, rv.y[a]: -1.0}, hi=0.0)
                    m.add({rv.x[a, b]: 1.0, rv.x[b, a]: 1.0, rv.y[b]: -1.0}, hi=0.0)
    return rv


def add_cut(m: Model, rv: RouteVars, cut: GsecCut) -> None:
    row: dict[int, float] = {}
    for i in cut.nodes:
        for j in cut.nodes:
            if i != j and (i, j) in rv.x:
                row[rv.x[i, j]] = 1.0
    for i in cut.nodes:
        if i != cut.anchor:
            row[rv.y[i]] = row.get(rv.y[i], 0.0) - 1.0
    m.add(row, hi=0.0)


def route_duration_expr(rv: RouteVars, dist) -> dict[int, float]:
    return {v: float(dist(i, j)) for (i, j), v in rv.x.items()}


@dataclass
class BranchCutResult:
    status: str  # "optimal" | "timeout" | "infeasible"
    solution: np.ndarray | None
    value: float | None
    bound: float | None
    rounds: int
    cuts: int


def branch_and_cut(m: Model, routes: list[RouteVars], time_limit: float | None = None) -> BranchCutResult:
    """Solve `m`, separating GSECs on every route until the integer optimum has no subtour."""
    start = time.perf_counter()
    rounds = ncuts = 0
    while True:
        remaining = None if time_limit is None else time_limit - (time.perf_counter() - start)
        if remaining is not None and remaining <= 0:
            return BranchCutResult("timeout", None, None, None, rounds, ncuts)
        status, x, fun, bound = m.solve(remaining)
        rounds += 1
        if status == 2:
            return BranchCutResult("infeasible", None, None, None, rounds, ncuts)
        if status != 0:
            # relaxation bound of the partially cut model is still valid
            return BranchCutResult("timeout", None, None, bound, rounds, ncuts)
        found = []
        for rv in routes:
            xv, yv = rv.values(x)
            for cut in separate_gsec(xv, yv):
                found.append(cut)
        if not found:
            return BranchCutResult("optimal", x, fun, fun, rounds, ncuts)
        # a subtour found on one route is forbidden on every route of the model
        for cut in found:
            for rv in routes:
                if cut.nodes <= set(rv.y):
                    add_cut(m, rv, cut)
                    ncuts += 1
