"""Balanced connected k-way partitioning of the weighted grid graph.

The weights are the projected transaction flows, so a light cut separates
clusters that rarely exchange power.  The pipeline is multilevel: heavy-edge
matching coarsens the graph, a greedy region-growing heuristic splits the
coarsest level, and boundary moves with positive gain refine the cut on the
way back up.  Every candidate assignment must keep each part connected and
within the balance band; moves that would break either are rejected, and the
final assignment is re-validated before it is returned.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import Edge, NetworkGraph, ScenarioError, UnitRegistry, canonical_edge

_BALANCE_EPS = 1e-9


@dataclass
class Partition:
    """Assignment of nodes to parts 1..m with its cut bookkeeping."""

    assignment: dict[int, int]
    m: int
    cut_weight: float
    initial_cut_weight: float  # before boundary refinement

    def part_nodes(self, part: int) -> list[int]:
        return sorted(v for v, p in self.assignment.items() if p == part)

    def parts(self) -> list[list[int]]:
        return [self.part_nodes(p) for p in range(1, self.m + 1)]

    def unit_sets(self, units: UnitRegistry) -> list[dict[str, tuple[int, ...]]]:
        """Per-part source/sink/storage node tuples, parts ordered 1..m."""
        out = []
        for p in range(1, self.m + 1):
            members = set(self.part_nodes(p))
            out.append({
                "sources": tuple(v for v in units.sources if v in members),
                "sinks": tuple(v for v in units.sinks if v in members),
                "storages": tuple(v for v in units.storages if v in members),
            })
        return out


def balance_bounds(n_nodes: int, m: int, tol: float) -> tuple[float, float]:
    """Allowed part-size interval around the ideal ceil(V/m) size."""
    ideal = math.ceil(n_nodes / m)
    return ideal / tol, ideal * tol


def _sizes(assignment: dict[int, int], m: int) -> list[int]:
    counts = [0] * (m + 1)
    for p in assignment.values():
        counts[p] += 1
    return counts[1:]


def cut_weight_of(assignment: dict[int, int],
                  weights: dict[Edge, float]) -> float:
    return sum(w for (a, b), w in weights.items()
               if assignment[a] != assignment[b])


def _plain_adjacency(graph: NetworkGraph) -> dict[int, list[int]]:
    return {v: [u for u, _ in nbrs] for v, nbrs in graph.adjacency().items()}


def _part_connected(nodes: set[int], adjacency: dict[int, list[int]]) -> bool:
    if not nodes:
        return False
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if v in nodes and v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(nodes)


def validate_partition(assignment: dict[int, int], graph: NetworkGraph, m: int,
                       tol: float) -> None:
    """Raise ScenarioError on any violated partition invariant."""
    if set(assignment) != set(graph.nodes):
        raise ScenarioError("partition does not cover the node set exactly")
    parts = sorted(set(assignment.values()))
    if parts != list(range(1, m + 1)):
        raise ScenarioError(f"partition labels {parts} are not 1..{m}")
    lo, hi = balance_bounds(len(graph.nodes), m, tol)
    adjacency = _plain_adjacency(graph)
    for p in range(1, m + 1):
        members = {v for v, q in assignment.items() if q == p}
        size = len(members)
        if size < lo - _BALANCE_EPS or size > hi + _BALANCE_EPS:
            raise ScenarioError(
                f"part {p} has {size} nodes, outside [{lo:.3f}, {hi:.3f}]")
        if not _part_connected(members, adjacency):
            raise ScenarioError(f"part {p} is not connected")


# ---------------------------------------------------------------------------
# exact search on tiny graphs

_EXACT_LIMIT = 14


def _connected_supersets(seed: int, allowed: frozenset[int],
                         adjacency: dict[int, list[int]],
                         size_lo: int, size_hi: int) -> list[frozenset[int]]:
    """All connected subsets of ``allowed`` that contain ``seed`` with size in
    [size_lo, size_hi].  Canonical DFS over (subset, frontier) states."""
    out: list[frozenset[int]] = []
    seen: set[frozenset[int]] = set()

    def extend(current: frozenset[int]) -> None:
        if current in seen:
            return
        seen.add(current)
        if size_lo <= len(current) <= size_hi:
            out.append(current)
        if len(current) >= size_hi:
            return
        frontier = sorted({v for u in current for v in adjacency[u]
                           if v in allowed and v not in current})
        for v in frontier:
            extend(current | {v})

    extend(frozenset({seed}))
    return out


def _exact_small(graph: NetworkGraph, weights: dict[Edge, float], m: int,
                 lo: float, hi: float) -> dict[int, int] | None:
    """Minimum-cut balanced connected m-partition by exhaustive search.
    Returns None when no feasible partition exists.  Parts are labeled in
    order of their smallest node, so the result is deterministic."""
    adjacency = _plain_adjacency(graph)
    size_lo = math.ceil(lo - _BALANCE_EPS)
    size_hi = math.floor(hi + _BALANCE_EPS)
    best: tuple[float, tuple[int, ...]] | None = None

    def recurse(remaining: frozenset[int], parts: list[frozenset[int]]) -> None:
        nonlocal best
        if len(parts) == m:
            if remaining:
                return
            assignment = {}
            for idx, part in enumerate(sorted(parts, key=min), start=1):
                for v in part:
                    assignment[v] = idx
            cw = cut_weight_of(assignment, weights)
            key = (cw, tuple(assignment[v] for v in sorted(assignment)))
            if best is None or key < best:
                best = key
            return
        parts_left = m - len(parts)
        if not (parts_left * size_lo <= len(remaining) <= parts_left * size_hi):
            return
        seed = min(remaining)
        for subset in _connected_supersets(seed, remaining, adjacency,
                                           size_lo, size_hi):
            rest = remaining - subset
            if parts_left > 1:
                # remaining graph need not be connected as a whole, but each
                # future part must be; quick reject only on size
                if len(rest) < (parts_left - 1) * size_lo:
                    continue
            recurse(rest, parts + [subset])

    recurse(frozenset(graph.nodes), [])
    if best is None:
        return None
    order = sorted(graph.nodes)
    return {v: best[1][i] for i, v in enumerate(order)}


# ---------------------------------------------------------------------------
# coarsening

@dataclass
class _Level:
    nodes: list[int]
    adjacency: dict[int, dict[int, float]]  # u -> {v: weight}
    node_weight: dict[int, int]  # coarse node -> number of original nodes
    parent: dict[int, int] = field(default_factory=dict)  # finer node -> coarse node


def _build_level(graph: NetworkGraph, weights: dict[Edge, float]) -> _Level:
    adjacency: dict[int, dict[int, float]] = {v: {} for v in graph.nodes}
    for (a, b) in graph.edges:
        w = weights.get((a, b), 0.0)
        adjacency[a][b] = w
        adjacency[b][a] = w
    return _Level(nodes=list(graph.nodes), adjacency=adjacency,
                  node_weight={v: 1 for v in graph.nodes})


def _coarsen(level: _Level, max_part_weight: float) -> _Level | None:
    """Heavy-edge matching pass.  Returns None when no pair can merge."""
    matched: dict[int, int] = {}
    taken: set[int] = set()
    for u in sorted(level.nodes):
        if u in taken:
            continue
        best, best_w = None, 0.0
        for v, w in sorted(level.adjacency[u].items()):
            if v in taken or v == u:
                continue
            if level.node_weight[u] + level.node_weight[v] > max_part_weight:
                continue
            # zero-weight edges are free cut candidates; never contract them
            if w > best_w + _BALANCE_EPS:
                best, best_w = v, w
        if best is not None:
            matched[u] = best
            taken.add(u)
            taken.add(best)
    if not matched:
        return None
    parent: dict[int, int] = {}
    new_id = 0
    for u in sorted(level.nodes):
        if u in parent:
            continue
        new_id += 1
        parent[u] = new_id
        if u in matched:
            parent[matched[u]] = new_id
    coarse_nodes = list(range(1, new_id + 1))
    adjacency: dict[int, dict[int, float]] = {v: {} for v in coarse_nodes}
    node_weight = {v: 0 for v in coarse_nodes}
    for u in level.nodes:
        node_weight[parent[u]] += level.node_weight[u]
        for v, w in level.adjacency[u].items():
            cu, cv = parent[u], parent[v]
            if cu == cv:
                continue
            adjacency[cu][cv] = adjacency[cu].get(cv, 0.0) + 0.5 * w
            adjacency[cv][cu] = adjacency[cv].get(cu, 0.0) + 0.5 * w
    return _Level(nodes=coarse_nodes, adjacency=adjacency,
                  node_weight=node_weight, parent=parent)


# ---------------------------------------------------------------------------
# initial assignment on the coarsest level

def _grow_initial(level: _Level, m: int, tol: float) -> dict[int, int]:
    """Greedy graph growing: seed each part at the lowest unassigned id and
    absorb the most-connected neighbor until the size target is met."""
    assignment: dict[int, int] = {}
    unassigned = set(level.nodes)
    for part in range(1, m + 1):
        if not unassigned:
            break
        remaining_parts = m - part + 1
        remaining_weight = sum(level.node_weight[v] for v in unassigned)
        target = remaining_weight / remaining_parts
        seed = min(unassigned)
        assignment[seed] = part
        unassigned.discard(seed)
        size = level.node_weight[seed]
        lo = target / tol
        while size < target - _BALANCE_EPS and unassigned:
            frontier: dict[int, float] = {}
            for u, p in assignment.items():
                if p != part:
                    continue
                for v, w in level.adjacency[u].items():
                    if v in unassigned:
                        frontier[v] = frontier.get(v, 0.0) + w
            if not frontier:
                break
            pick = max(sorted(frontier), key=lambda v: frontier[v])
            nw = level.node_weight[pick]
            # a zero-weight frontier is a free place to cut once the part is
            # viable; otherwise absorb only while it brings us nearer target
            if frontier[pick] <= 0.0 and size >= lo - _BALANCE_EPS:
                break
            if size >= lo and abs(size + nw - target) > abs(size - target):
                break
            assignment[pick] = part
            unassigned.discard(pick)
            size += nw
    # leftovers join the most-connected part, disconnected ones the smallest
    while unassigned:
        placed = False
        for v in sorted(unassigned):
            scores: dict[int, float] = {}
            for u, w in level.adjacency[v].items():
                if u in assignment:
                    scores[assignment[u]] = scores.get(assignment[u], 0.0) + w
            if scores:
                part = max(sorted(scores), key=lambda p: scores[p])
                assignment[v] = part
                unassigned.discard(v)
                placed = True
                break
        if not placed:
            v = min(unassigned)
            sizes = {p: 0 for p in range(1, m + 1)}
            for u, p in assignment.items():
                sizes[p] += level.node_weight[u]
            assignment[v] = min(sizes, key=lambda p: (sizes[p], p))
            unassigned.discard(v)
    return assignment


# ---------------------------------------------------------------------------
# refinement and repair on any level

def _level_neighbors(level: _Level, u: int) -> dict[int, float]:
    return level.adjacency[u]


def _movable(level: _Level, assignment: dict[int, int], u: int) -> bool:
    """u can leave its part without disconnecting it."""
    part = assignment[u]
    members = {v for v, p in assignment.items() if p == part and v != u}
    if not members:
        return False
    adjacency = {v: [w for w in level.adjacency[v] if w in members]
                 for v in members}
    return _part_connected(members, adjacency)


def _touches(level: _Level, assignment: dict[int, int], u: int,
             part: int) -> bool:
    return any(assignment.get(v) == part for v in level.adjacency[u])


def _gain(level: _Level, assignment: dict[int, int], u: int,
          to_part: int) -> float:
    stay = sum(w for v, w in level.adjacency[u].items()
               if assignment[v] == assignment[u])
    move = sum(w for v, w in level.adjacency[u].items()
               if assignment[v] == to_part)
    return move - stay


def _repair_balance(level: _Level, assignment: dict[int, int], m: int,
                    lo: float, hi: float) -> None:
    """Shift boundary nodes from oversized to undersized parts, keeping
    connectivity; cheapest cut damage first."""
    for _ in range(4 * len(level.nodes)):
        sizes = {p: 0 for p in range(1, m + 1)}
        for u, p in assignment.items():
            sizes[p] += level.node_weight[u]
        over = [p for p in range(1, m + 1) if sizes[p] > hi + _BALANCE_EPS]
        under = [p for p in range(1, m + 1) if sizes[p] < lo - _BALANCE_EPS]
        if not over and not under:
            return
        best: tuple[float, int, int] | None = None  # (-gain, node, to_part)
        for u in sorted(assignment):
            p = assignment[u]
            candidates = []
            if p in over:
                candidates = [q for q in range(1, m + 1) if q != p
                              and sizes[q] + level.node_weight[u] <= hi + _BALANCE_EPS
                              and _touches(level, assignment, u, q)]
            else:
                candidates = [q for q in under if q != p
                              and sizes[p] - level.node_weight[u] >= lo - _BALANCE_EPS
                              and sizes[q] + level.node_weight[u] <= hi + _BALANCE_EPS
                              and _touches(level, assignment, u, q)]
            if not candidates or not _movable(level, assignment, u):
                continue
            for q in candidates:
                key = (-_gain(level, assignment, u, q), u, q)
                if best is None or key < best:
                    best = key
        if best is None:
            return  # cannot repair further; validation decides
        _, u, q = best
        assignment[u] = q


_FRUITLESS_LIMIT = 20


def _fm_pass(level: _Level, assignment: dict[int, int], m: int,
             lo: float, hi: float) -> bool:
    """One Fiduccia-Mattheyses pass: tentatively move each boundary node at
    most once (best gain first, negative gains allowed), then keep the prefix
    of moves with the best cumulative gain.  Returns True when the cut got
    strictly smaller, so overall refinement is monotone."""
    work = dict(assignment)
    sizes = {p: 0 for p in range(1, m + 1)}
    for u, p in work.items():
        sizes[p] += level.node_weight[u]
    locked: set[int] = set()
    history: list[tuple[int, int]] = []  # (node, to_part)
    cum = 0.0
    best_cum = 0.0
    best_len = 0
    fruitless = 0
    while fruitless < _FRUITLESS_LIMIT:
        candidates: list[tuple[float, int, int]] = []
        for u in sorted(work):
            if u in locked:
                continue
            p = work[u]
            nw = level.node_weight[u]
            if sizes[p] - nw < lo - _BALANCE_EPS:
                continue
            for q in sorted({work[v] for v in level.adjacency[u]
                             if work[v] != p}):
                if sizes[q] + nw > hi + _BALANCE_EPS:
                    continue
                candidates.append((-_gain(level, work, u, q), u, q))
        candidates.sort()
        chosen = None
        for neg_g, u, q in candidates:
            if _movable(level, work, u):
                chosen = (neg_g, u, q)
                break
        if chosen is None:
            break
        neg_g, u, q = chosen
        p = work[u]
        work[u] = q
        sizes[p] -= level.node_weight[u]
        sizes[q] += level.node_weight[u]
        locked.add(u)
        history.append((u, q))
        cum += -neg_g
        if cum > best_cum + _BALANCE_EPS:
            best_cum = cum
            best_len = len(history)
            fruitless = 0
        else:
            fruitless += 1
    if best_cum <= _BALANCE_EPS:
        return False
    for u, q in history[:best_len]:
        assignment[u] = q
    return True


def _refine(level: _Level, assignment: dict[int, int], m: int,
            lo: float, hi: float, passes: int = 8) -> None:
    """Repeat FM passes while they keep improving the cut."""
    for _ in range(passes):
        if not _fm_pass(level, assignment, m, lo, hi):
            return


def _restore_connectivity(level: _Level, assignment: dict[int, int], m: int,
                          lo: float, hi: float) -> None:
    """Reattach stray components of each part to a neighboring part."""
    for _ in range(len(level.nodes)):
        adjacency = {u: sorted(level.adjacency[u]) for u in level.nodes}
        broken = None
        for p in range(1, m + 1):
            members = {v for v, q in assignment.items() if q == p}
            if members and not _part_connected(
                    members, {v: [w for w in adjacency[v] if w in members]
                              for v in members}):
                broken = (p, members)
                break
        if broken is None:
            return
        p, members = broken
        # keep the largest component (ties: lowest min id), reassign the rest
        components: list[set[int]] = []
        left = set(members)
        while left:
            start = min(left)
            comp = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for v in level.adjacency[u]:
                    if v in left and v not in comp:
                        comp.add(v)
                        stack.append(v)
            components.append(comp)
            left -= comp
        components.sort(key=lambda c: (-sum(level.node_weight[v] for v in c),
                                       min(c)))
        for comp in components[1:]:
            for u in sorted(comp):
                scores: dict[int, float] = {}
                for v, w in level.adjacency[u].items():
                    q = assignment[v]
                    if q != p:
                        scores[q] = scores.get(q, 0.0) + w
                if scores:
                    assignment[u] = max(sorted(scores), key=lambda q: scores[q])
                # else: interior of the stray component; later sweeps catch it


def partition_kway(graph: NetworkGraph, weights: dict[Edge, float], m: int,
                   balance_tol: float = 1.3) -> Partition:
    """Partition the graph into m balanced connected parts with a light cut."""
    n = len(graph.nodes)
    if m < 1:
        raise ScenarioError(f"cluster count {m} must be at least 1")
    if m > n:
        raise ScenarioError(f"cluster count {m} exceeds node count {n}")
    if not graph.is_connected():
        raise ScenarioError("cannot partition a disconnected graph")
    lo, hi = balance_bounds(n, m, balance_tol)
    if m * math.floor(hi + _BALANCE_EPS) < n:
        raise ScenarioError(
            f"no balanced partition exists: {m} parts of at most "
            f"{math.floor(hi + _BALANCE_EPS)} nodes cannot cover {n}")
    if m == 1:
        assignment = {v: 1 for v in graph.nodes}
        return Partition(assignment=assignment, m=1, cut_weight=0.0,
                         initial_cut_weight=0.0)
    if m == n:
        assignment = {v: i + 1 for i, v in enumerate(sorted(graph.nodes))}
        cw = cut_weight_of(assignment, weights)
        return Partition(assignment=assignment, m=m, cut_weight=cw,
                         initial_cut_weight=cw)

    base = _build_level(graph, weights)
    levels = [base]
    coarse_target = max(30, 4 * m)
    # keep coarse nodes light so the initial split can hit size targets
    merge_cap = max(2.0, math.ceil(n / m) / 4.0)
    while len(levels[-1].nodes) > coarse_target:
        nxt = _coarsen(levels[-1], max_part_weight=merge_cap)
        if nxt is None or len(nxt.nodes) >= len(levels[-1].nodes):
            break
        levels.append(nxt)

    coarsest = levels[-1]
    assignment = _grow_initial(coarsest, m, balance_tol)
    _restore_connectivity(coarsest, assignment, m, lo, hi)
    _repair_balance(coarsest, assignment, m, lo, hi)
    if len(levels) == 1:
        initial_cut = cut_weight_of(assignment, weights)
    _refine(coarsest, assignment, m, lo, hi)

    # uncoarsen: project labels to the finer level, then refine there
    for idx in range(len(levels) - 2, -1, -1):
        fine = levels[idx]
        coarse_of = levels[idx + 1].parent
        assignment = {u: assignment[coarse_of[u]] for u in fine.nodes}
        _restore_connectivity(fine, assignment, m, lo, hi)
        _repair_balance(fine, assignment, m, lo, hi)
        if idx == 0:
            initial_cut = cut_weight_of(assignment, weights)
        _refine(fine, assignment, m, lo, hi)

    try:
        validate_partition(assignment, graph, m, balance_tol)
    except ScenarioError:
        # heuristic failed on a small graph: fall back to exhaustive search,
        # which settles feasibility instead of guessing
        if n > _EXACT_LIMIT:
            raise
        exact = _exact_small(graph, weights, m, lo, hi)
        if exact is None:
            raise ScenarioError(
                f"no connected partition into {m} parts within balance "
                f"[{lo:.3f}, {hi:.3f}] exists") from None
        assignment = exact
        initial_cut = cut_weight_of(assignment, weights)
    cw = cut_weight_of(assignment, weights)
    if cw > initial_cut + _BALANCE_EPS:
        raise AssertionError("refinement increased the cut weight")
    return Partition(assignment=assignment, m=m, cut_weight=cw,
                     initial_cut_weight=initial_cut)


def dump_partition_csv(partition: Partition, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "part"])
        for v in sorted(partition.assignment):
            writer.writerow([v, partition.assignment[v]])
