"""Shortest source-to-sink paths under additive edge lengths.

Path cost between a source and a sink is the sum of edge lengths along a
minimum-length path.  Among equal-cost paths the lexicographically smallest
node sequence is kept, so results are reproducible across runs and platforms.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass
from pathlib import Path

from .network import NetworkGraph, UnitRegistry, canonical_edge, fmt_float

# Relative slack when deciding whether an edge lies on some minimum-cost path.
# Distances are sums of the same floats accumulated in different orders, so
# exact equality is one ulp too strict.
_REL_TOL = 1e-9


def dijkstra(graph: NetworkGraph, origin: int) -> dict[int, float]:
    """Minimum path cost from origin to every node."""
    adj = graph.adjacency()
    dist = {origin: 0.0}
    done: set[int] = set()
    heap: list[tuple[float, int]] = [(0.0, origin)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj[u]:
            nd = d + w
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _lex_shortest_path(graph: NetworkGraph, i: int, j: int,
                       dist_to_j: dict[int, float]) -> list[int]:
    """Walk from i to j always taking the smallest neighbor that stays shortest.

    An edge (u, v) continues a minimum-cost path to j exactly when
    l_uv + dist(v, j) == dist(u, j); picking the smallest such v at every hop
    yields the lexicographically smallest minimizing node sequence.
    """
    adj = graph.adjacency()
    path = [i]
    u = i
    guard = graph.n_nodes + 1
    while u != j:
        here = dist_to_j[u]
        tol = _REL_TOL * max(1.0, abs(here))
        nxt = None
        for v, w in adj[u]:  # neighbors ascend, first hit is lexicographic min
            if v in dist_to_j and abs(w + dist_to_j[v] - here) <= tol:
                nxt = v
                break
        if nxt is None:
            raise RuntimeError(f"shortest-path reconstruction stalled at node {u}")
        path.append(nxt)
        u = nxt
        guard -= 1
        if guard < 0:
            raise RuntimeError("shortest-path reconstruction cycled")
    return path


@dataclass
class PathTable:
    """Minimum cost and representative path for every (source, sink) pair.

    ``paths[(i, j)]`` is the node sequence from i to j (a single node when
    i == j), ``costs[(i, j)]`` its total length.
    """

    sources: tuple[int, ...]
    sinks: tuple[int, ...]
    costs: dict[tuple[int, int], float]
    paths: dict[tuple[int, int], tuple[int, ...]]

    def cost(self, i: int, j: int) -> float:
        return self.costs[(i, j)]

    def traversal_edges(self, i: int, j: int) -> list[tuple[int, int]]:
        """Edges of the stored path in traversal order, endpoints as visited."""
        seq = self.paths[(i, j)]
        return [(seq[t], seq[t + 1]) for t in range(len(seq) - 1)]

    def max_cost(self) -> float:
        return max(self.costs.values(), default=0.0)


def all_pairs_source_sink(graph: NetworkGraph, units: UnitRegistry) -> PathTable:
    """Cost matrix and tie-broken paths for every source-sink pair."""
    dist_from_sink = {j: dijkstra(graph, j) for j in units.sinks}
    costs: dict[tuple[int, int], float] = {}
    paths: dict[tuple[int, int], tuple[int, ...]] = {}
    for i in units.sources:
        for j in units.sinks:
            if i == j:
                costs[(i, j)] = 0.0
                paths[(i, j)] = (i,)
                continue
            d = dist_from_sink[j].get(i)
            if d is None:
                raise RuntimeError(f"no path between source {i} and sink {j}")
            costs[(i, j)] = d
            paths[(i, j)] = tuple(_lex_shortest_path(graph, i, j, dist_from_sink[j]))
    return PathTable(sources=units.sources, sinks=units.sinks,
                     costs=costs, paths=paths)


def dump_paths_csv(table: PathTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "sink", "cost", "path"])
        for i in table.sources:
            for j in table.sinks:
                writer.writerow([i, j, fmt_float(table.costs[(i, j)]),
                                 "-".join(str(v) for v in table.paths[(i, j)])])


def verify_path_edges(table: PathTable, graph: NetworkGraph) -> None:
    """Invariant check: stored paths use existing edges and sum to the cost."""
    for (i, j), seq in table.paths.items():
        total = 0.0
        for (a, b) in zip(seq, seq[1:]):
            e = canonical_edge(a, b)
            if e not in graph.edge_length:
                raise AssertionError(f"path {i}->{j} uses missing edge {e}")
            total += graph.edge_length[e]
        if abs(total - table.costs[(i, j)]) > 1e-9 * max(1.0, abs(total)):
            raise AssertionError(f"path {i}->{j} cost mismatch")
