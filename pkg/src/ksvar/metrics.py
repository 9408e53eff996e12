"""Topology metrics for inferred networks.

Path metrics (betweenness, closeness) follow directed edges.  Clustering,
components, and diameter are computed on the symmetrized simple graph.
Self-loops never enter paths or degrees; they are reported as a separate
count.  Shortest-path fractions are accumulated in exact rational
arithmetic, so results are reproducible bit for bit against brute-force
enumeration.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .errors import ShapeMismatch
from .solver import EffectiveNetwork

CONVENTIONS = (
    "betweenness and closeness use directed edges; clustering, components, "
    "and diameter use the symmetrized simple graph; self-loops are excluded "
    "from paths and degrees and reported as self_loop_count"
)


def _digraph(net: EffectiveNetwork) -> np.ndarray:
    adj = net.aggregate_support.copy()
    np.fill_diagonal(adj, False)
    return adj


def _symmetric(net: EffectiveNetwork) -> np.ndarray:
    adj = _digraph(net)
    return adj | adj.T


def degrees(net: EffectiveNetwork) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(in, out, total) degree per node on the aggregate directed support."""
    adj = _digraph(net)
    in_deg = adj.sum(axis=0).astype(int)
    out_deg = adj.sum(axis=1).astype(int)
    return in_deg, out_deg, in_deg + out_deg


def _bfs(adj_lists: list[np.ndarray], source: int, n: int):
    """Distances and shortest-path counts from one source."""
    dist = np.full(n, -1, dtype=int)
    sigma = np.zeros(n, dtype=object)
    dist[source] = 0
    sigma[source] = 1
    order = []
    queue = deque([source])
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in adj_lists[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] = sigma[w] + sigma[v]
    return dist, sigma, order


def betweenness(net: EffectiveNetwork) -> np.ndarray:
    """Fraction of directed shortest paths through each node, normalized
    by (N-1)(N-2); unreachable pairs contribute nothing."""
    adj = _digraph(net)
    n = adj.shape[0]
    if n < 3:
        return np.zeros(n)
    adj_lists = [np.flatnonzero(adj[v]) for v in range(n)]
    totals = [Fraction(0)] * n
    for s in range(n):
        dist, sigma, order = _bfs(adj_lists, s, n)
        delta = [Fraction(0)] * n
        for w in reversed(order):
            coeff = (1 + delta[w]) / sigma[w]
            for v in np.flatnonzero(adj[:, w]):
                if dist[v] == dist[w] - 1:
                    delta[v] += sigma[v] * coeff
            if w != s:
                totals[w] += delta[w]
    norm = (n - 1) * (n - 2)
    return np.array([float(t / norm) for t in totals])


def closeness(net: EffectiveNetwork) -> np.ndarray:
    """(N-1) / sum of directed out-distances; 0 when any node is unreachable."""
    adj = _digraph(net)
    n = adj.shape[0]
    adj_lists = [np.flatnonzero(adj[v]) for v in range(n)]
    out = np.zeros(n)
    for v in range(n):
        dist, _, order = _bfs(adj_lists, v, n)
        if len(order) == n and n > 1:
            out[v] = (n - 1) / int(dist.sum())
    return out


def clustering(net: EffectiveNetwork) -> tuple[np.ndarray, float]:
    """Per-node and global clustering on the symmetrized graph.

    Per node: triangles / C(degree, 2), zero below degree 2.  Global:
    3 * triangles / connected triples.
    """
    sym = _symmetric(net).astype(np.int64)
    n = sym.shape[0]
    deg = sym.sum(axis=1)
    sym2 = sym @ sym
    tri_node = (sym2 * sym).sum(axis=1) // 2
    per_node = np.zeros(n)
    for v in range(n):
        if deg[v] >= 2:
            per_node[v] = int(tri_node[v]) / comb(int(deg[v]), 2)
    triangles = int((sym2 * sym).sum()) // 6
    triples = sum(comb(int(d), 2) for d in deg)
    global_cc = (3 * triangles) / triples if triples else 0.0
    return per_node, global_cc


def _components(sym: np.ndarray) -> list[list[int]]:
    n = sym.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        queue = deque([start])
        seen[start] = True
        members = []
        while queue:
            v = queue.popleft()
            members.append(v)
            for w in np.flatnonzero(sym[v]):
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        comps.append(members)
    return comps


def global_metrics(net: EffectiveNetwork) -> dict:
    """Graph-level summary: density, clustering, diameter, component data,
    mean neighbor count, and the self-loop tally."""
    adj = _digraph(net)
    n = adj.shape[0]
    sym = _symmetric(net)
    n_edges = int(adj.sum())
    density = n_edges / (n * (n - 1)) if n > 1 else 0.0
    _, global_cc = clustering(net)
    comps = _components(sym)
    adj_lists = [np.flatnonzero(sym[v]) for v in range(n)]
    diameter = 0
    for v in range(n):
        dist, _, order = _bfs(adj_lists, v, n)
        if order:
            reached = dist[dist > 0]
            if reached.size:
                diameter = max(diameter, int(reached.max()))
    return {
        "density": density,
        "global_clustering": global_cc,
        "diameter": diameter,
        "avg_neighbors": float(sym.sum()) / n if n else 0.0,
        "self_loop_count": int(np.diag(net.aggregate_support).sum()),
        "connected_component_count": len(comps),
        "largest_component_size": max((len(c) for c in comps), default=0),
    }


@dataclass
class MetricsReport:
    """Per-node and global metrics for one network."""

    node_labels: tuple[str, ...]
    in_degree: np.ndarray
    out_degree: np.ndarray
    total_degree: np.ndarray
    betweenness: np.ndarray
    closeness: np.ndarray
    clustering_coefficient: np.ndarray
    density: float
    global_clustering: float
    diameter: int
    avg_neighbors: float
    self_loop_count: int
    connected_component_count: int
    largest_component_size: int
    conventions: str = field(default=CONVENTIONS)

    def to_json_dict(self) -> dict:
        nodes = {}
        for idx, label in enumerate(self.node_labels):
            nodes[label] = {
                "in_degree": int(self.in_degree[idx]),
                "out_degree": int(self.out_degree[idx]),
                "total_degree": int(self.total_degree[idx]),
                "betweenness": float(self.betweenness[idx]),
                "closeness": float(self.closeness[idx]),
                "clustering_coefficient": float(self.clustering_coefficient[idx]),
            }
        return {
            "conventions": self.conventions,
            "nodes": nodes,
            "global": {
                "density": self.density,
                "global_clustering": self.global_clustering,
                "diameter": self.diameter,
                "avg_neighbors": self.avg_neighbors,
                "self_loop_count": self.self_loop_count,
                "connected_component_count": self.connected_component_count,
                "largest_component_size": self.largest_component_size,
            },
        }

    def to_csv_rows(self) -> list[list]:
        rows = [
            [
                "node",
                "in_degree",
                "out_degree",
                "total_degree",
                "betweenness",
                "closeness",
                "clustering_coefficient",
            ]
        ]
        for idx, label in enumerate(self.node_labels):
            rows.append(
                [
                    label,
                    int(self.in_degree[idx]),
                    int(self.out_degree[idx]),
                    int(self.total_degree[idx]),
                    repr(float(self.betweenness[idx])),
                    repr(float(self.closeness[idx])),
                    repr(float(self.clustering_coefficient[idx])),
                ]
            )
        rows.append(
            [
                "GLOBAL",
                f"density={self.density!r}",
                f"global_clustering={self.global_clustering!r}",
                f"diameter={self.diameter}",
                f"avg_neighbors={self.avg_neighbors!r}",
                f"self_loops={self.self_loop_count}",
                f"components={self.connected_component_count};largest={self.largest_component_size}",
            ]
        )
        return rows


def compute_report(net: EffectiveNetwork) -> MetricsReport:
    """All metrics for one network in one report."""
    n = net.n_nodes
    labels = net.node_labels if net.node_labels else tuple(f"n{i}" for i in range(n))
    if len(labels) != n:
        raise ShapeMismatch(f"{len(labels)} labels for {n} nodes")
    in_deg, out_deg, total = degrees(net)
    per_node_cc, _ = clustering(net)
    glob = global_metrics(net)
    return MetricsReport(
        node_labels=tuple(labels),
        in_degree=in_deg,
        out_degree=out_deg,
        total_degree=total,
        betweenness=betweenness(net),
        closeness=closeness(net),
        clustering_coefficient=per_node_cc,
        **glob,
    )
