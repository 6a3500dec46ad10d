"""Separation of generalized subtour elimination constraints.

For a route with arc values x and visit values y, the constraint for a
customer set S and anchor l in S reads

    sum_{i,j in S} x_ij <= sum_{i in S - l} y_i,

which, under the degree equations, is equivalent to x(delta+(S)) >= y_l.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import networkx as nx

EPS = 1e-6


@dataclass(frozen=True)
class GsecCut:
    nodes: frozenset[int]
    anchor: int

    def lhs(self, x: Mapping[tuple[int, int], float]) -> float:
        return sum(v for (i, j), v in x.items() if i in self.nodes and j in self.nodes)

    def rhs(self, y: Mapping[int, float]) -> float:
        return sum(y.get(i, 0.0) for i in self.nodes if i != self.anchor)

    def violated(self, x, y, tol: float = EPS) -> bool:
        return self.lhs(x) > self.rhs(y) + tol


def separate_gsec(
    x: Mapping[tuple[int, int], float],
    y: Mapping[int, float],
    depot: int = 0,
    fractional: bool = False,
) -> list[GsecCut]:
    """Return violated GSECs for the support (x, y).

    Integral supports: one cut per connected component that does not contain
    the depot. Fractional supports (``fractional=True``): max-flow from every
    visited node to the depot, cutting the source side when the flow is below
    the node's visit value.
    """
    if not fractional:
        g = nx.Graph()
        for (i, j), v in x.items():
            if v > 0.5:
                g.add_edge(i, j)
        cuts = []
        for comp in nx.connected_components(g):
            if depot in comp or len(comp) < 2:
                continue
            anchor = max(sorted(comp), key=lambda i: y.get(i, 0.0))
            cuts.append(GsecCut(frozenset(comp), anchor))
        cuts.sort(key=lambda c: min(c.nodes))
        return cuts

    g = nx.DiGraph()
    for (i, j), v in x.items():
        if v > EPS:
            g.add_edge(i, j, capacity=v)
    cuts: dict[frozenset[int], GsecCut] = {}
    for l in sorted(y):
        if l == depot or y[l] <= EPS or l not in g:
            continue
        if depot not in g:
            reach = nx.node_connected_component(g.to_undirected(), l)
            s_nodes = frozenset(reach)
            flow = 0.0
        else:
            flow, (src_side, _) = nx.minimum_cut(g, l, depot)
            s_nodes = frozenset(src_side)
        if flow < y[l] - EPS and len(s_nodes) >= 2 and depot not in s_nodes:
            cut = GsecCut(s_nodes, l)
            if cut.violated(x, y) and s_nodes not in cuts:
                cuts[s_nodes] = cut
    return list(cuts.values())
