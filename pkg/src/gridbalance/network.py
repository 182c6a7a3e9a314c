"""Network model: graph topology, unit registry, per-step profiles, scenario I/O.

A scenario is a JSON document with four sections:

``graph``     nodes and edges (``a``, ``b``, ``length``), undirected, connected.
``units``     ``sources``, ``sinks``, ``storages`` (storage nodes must be sources).
``timeline``  ``tau_min``, ``N_t``, ``N_c``, ``M``, ``N_p``.
``profiles``  per-node arrays of length N_t (``S_up``/``S_dn``/``S_nom`` per source,
              ``D_up``/``D_dn``/``D_nom`` and optional ``D_actual`` per sink), either
              inline or as ``{"csv": "file.csv"}`` references with header ``node,k,value``.

Node ids in the file may be sparse; they are remapped to dense 1..V at load and the
alias table is kept so serialization restores the original numbering.  All powers are
MW, energies MWh, tau_min minutes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np


class ScenarioError(ValueError):
    """A scenario file violates the schema or a model invariant."""


Edge = tuple[int, int]


def canonical_edge(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


def fmt_float(v) -> str:
    """Shortest round-trippable decimal form, for deterministic CSV output."""
    return repr(float(v))


@dataclass
class NetworkGraph:
    """Undirected connected graph with strictly positive edge lengths.

    Nodes are dense integers 1..V.  ``alias`` maps the original file ids onto the
    dense ids.  Treated as immutable after load.
    """

    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]
    edge_length: dict[Edge, float]
    alias: dict[int, int] = field(default_factory=dict)
    _adjacency: dict[int, list[tuple[int, float]]] | None = field(
        default=None, repr=False, compare=False
    )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def length(self, a: int, b: int) -> float:
        return self.edge_length[canonical_edge(a, b)]

    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        """Neighbor lists as {node: [(neighbor, length), ...]}, neighbors ascending."""
        if self._adjacency is None:
            adj: dict[int, list[tuple[int, float]]] = {v: [] for v in self.nodes}
            for (a, b) in self.edges:
                w = self.edge_length[(a, b)]
                adj[a].append((b, w))
                adj[b].append((a, w))
            for v in adj:
                adj[v].sort()
            self._adjacency = adj
        return self._adjacency

    def is_connected(self) -> bool:
        if not self.nodes:
            return False
        adj = self.adjacency()
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.nodes)


@dataclass
class UnitRegistry:
    """Where the dispatchable sources, loads, and storages sit."""

    sources: tuple[int, ...]
    sinks: tuple[int, ...]
    storages: tuple[int, ...]

    def validate(self, graph: NetworkGraph) -> None:
        node_set = set(graph.nodes)
        for name, ids in (("sources", self.sources), ("sinks", self.sinks),
                          ("storages", self.storages)):
            for v in ids:
                if v not in node_set:
                    raise ScenarioError(f"units.{name}: node {v} is not in the graph")
            if len(set(ids)) != len(ids):
                raise ScenarioError(f"units.{name}: duplicate node ids")
        if not set(self.storages) <= set(self.sources):
            extra = sorted(set(self.storages) - set(self.sources))
            raise ScenarioError(f"units.storages: nodes {extra} are not source nodes")


@dataclass
class StorageParams:
    """Per-step storage envelopes, deviations around the nominal schedule."""

    node: int
    b_dn: np.ndarray  # (N_t,) <= 0, discharge-rate lower bound
    b_up: np.ndarray  # (N_t,) >= 0
    e_dn: np.ndarray  # (N_t,) <= 0, stored-energy lower bound
    e_up: np.ndarray  # (N_t,) >= 0
    e0: float  # initial stored-energy deviation


@dataclass
class ScenarioTimeline:
    """Sampling structure plus every per-node profile array."""

    tau_min: float
    n_t: int
    n_c: int
    m: int
    n_p: int
    s_up: dict[int, np.ndarray]
    s_dn: dict[int, np.ndarray]
    s_nom: dict[int, np.ndarray]
    d_up: dict[int, np.ndarray]
    d_dn: dict[int, np.ndarray]
    d_nom: dict[int, np.ndarray]
    d_actual: dict[int, np.ndarray] | None
    storage: dict[int, StorageParams]

    @property
    def tau_hours(self) -> float:
        return self.tau_min / 60.0

    @property
    def n_periods(self) -> int:
        return self.n_t // self.n_c

    def period_steps(self, eta: int) -> range:
        """Absolute step indices of clustering period eta (1-based)."""
        if not 1 <= eta <= self.n_periods:
            raise ScenarioError(
                f"period {eta} out of range 1..{self.n_periods}")
        start = (eta - 1) * self.n_c
        return range(start, start + self.n_c)


class Scenario(NamedTuple):
    graph: NetworkGraph
    units: UnitRegistry
    timeline: ScenarioTimeline


@dataclass
class VariationBounds:
    """Pointwise envelopes of unexpected variation around the nominal schedule.

    s_up[i] >= 0 and s_dn[i] <= 0 per source, d_up[j] >= 0 and d_dn[j] <= 0 per
    sink, each an (N_t,) array.
    """

    s_up: dict[int, np.ndarray]
    s_dn: dict[int, np.ndarray]
    d_up: dict[int, np.ndarray]
    d_dn: dict[int, np.ndarray]


def compute_variation_bounds(timeline: ScenarioTimeline) -> VariationBounds:
    """Envelope minus nominal, per unit and step; signs checked at load time."""
    s_up = {i: timeline.s_up[i] - timeline.s_nom[i] for i in timeline.s_up}
    s_dn = {i: timeline.s_dn[i] - timeline.s_nom[i] for i in timeline.s_dn}
    d_up = {j: timeline.d_up[j] - timeline.d_nom[j] for j in timeline.d_up}
    d_dn = {j: timeline.d_dn[j] - timeline.d_nom[j] for j in timeline.d_dn}
    return VariationBounds(s_up=s_up, s_dn=s_dn, d_up=d_up, d_dn=d_dn)


# ---------------------------------------------------------------------------
# loading


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ScenarioError(msg)


def _as_profile_array(raw, n_t: int, what: str, base: Path | None) -> np.ndarray:
    """Accept an inline list, a scalar (broadcast), or a {"csv": path} reference."""
    if isinstance(raw, dict):
        ref = raw.get("csv")
        _require(isinstance(ref, str), f"{what}: profile object must carry a 'csv' key")
        raise ScenarioError(
            f"{what}: csv references must be resolved per profile section, not per node")
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return np.full(n_t, float(raw))
    _require(isinstance(raw, list), f"{what}: expected an array of length {n_t}")
    _require(len(raw) == n_t, f"{what}: array length {len(raw)} != N_t {n_t}")
    try:
        return np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what}: non-numeric entry ({exc})") from exc


def _load_profile_csv(path: Path, n_t: int, what: str) -> dict[int, np.ndarray]:
    _require(path.exists(), f"{what}: csv file {path} not found")
    out: dict[int, np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _require(reader.fieldnames == ["node", "k", "value"],
                 f"{what}: csv header must be node,k,value")
        for row in reader:
            node = int(row["node"])
            k = int(row["k"])
            _require(0 <= k < n_t, f"{what}: step {k} out of range for node {node}")
            arr = out.setdefault(node, np.full(n_t, np.nan))
            arr[k] = float(row["value"])
    for node, arr in out.items():
        missing = np.flatnonzero(np.isnan(arr))
        _require(missing.size == 0,
                 f"{what}: node {node} missing value at step "
                 f"{int(missing[0]) if missing.size else -1}")
    return out


def _load_profile_section(profiles: dict, key: str, nodes: tuple[int, ...],
                          n_t: int, base: Path | None,
                          required: bool = True) -> dict[int, np.ndarray] | None:
    raw = profiles.get(key)
    if raw is None:
        _require(not required, f"profiles.{key}: section missing")
        return None
    if isinstance(raw, dict) and set(raw.keys()) == {"csv"}:
        _require(base is not None, f"profiles.{key}: csv reference needs a file path")
        table = _load_profile_csv(base / raw["csv"], n_t, f"profiles.{key}")
    else:
        _require(isinstance(raw, dict), f"profiles.{key}: expected a node -> array map")
        table = {}
        for node_str, arr in raw.items():
            node = int(node_str)
            table[node] = _as_profile_array(arr, n_t, f"profiles.{key}[{node}]", base)
    for v in nodes:
        _require(v in table, f"profiles.{key}: node {v} has no profile")
    extra = sorted(set(table) - set(nodes))
    _require(not extra, f"profiles.{key}: nodes {extra} are not declared for this role")
    return table


def _first_violation(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def load_scenario(path: str | Path) -> Scenario:
    """Parse, validate, and densely renumber a scenario file.

    Raises ScenarioError with the offending node/step named on any violation.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(f"scenario file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return parse_scenario(doc, base=path.parent)


def parse_scenario(doc: dict, base: Path | None = None) -> Scenario:
    for section in ("graph", "units", "timeline", "profiles"):
        _require(section in doc, f"missing top-level section '{section}'")

    # --- graph ---
    g = doc["graph"]
    raw_nodes = g.get("nodes")
    _require(isinstance(raw_nodes, list) and raw_nodes, "graph.nodes: empty or missing")
    _require(all(isinstance(v, int) and not isinstance(v, bool) for v in raw_nodes),
             "graph.nodes: ids must be integers")
    _require(len(set(raw_nodes)) == len(raw_nodes), "graph.nodes: duplicate ids")
    original = sorted(raw_nodes)
    alias = {orig: i + 1 for i, orig in enumerate(original)}
    nodes = tuple(range(1, len(original) + 1))

    edges: list[Edge] = []
    edge_length: dict[Edge, float] = {}
    for rec in g.get("edges", []):
        for key in ("a", "b", "length"):
            _require(key in rec, f"graph.edges: entry {rec} missing '{key}'")
        a, b = rec["a"], rec["b"]
        _require(a in alias, f"graph.edges: node {a} not declared")
        _require(b in alias, f"graph.edges: node {b} not declared")
        _require(a != b, f"graph.edges: self-loop at node {a}")
        length = float(rec["length"])
        _require(length > 0 and math.isfinite(length),
                 f"graph.edges: edge [{a},{b}] has non-positive length {rec['length']}")
        e = canonical_edge(alias[a], alias[b])
        _require(e not in edge_length,
                 f"graph.edges: duplicate edge [{a},{b}]")
        edges.append(e)
        edge_length[e] = length
    graph = NetworkGraph(nodes=nodes, edges=tuple(sorted(edges)),
                         edge_length=edge_length, alias=alias)
    _require(graph.is_connected(), "graph: not connected")

    # --- units ---
    u = doc["units"]

    def _unit_list(key: str) -> tuple[int, ...]:
        ids = u.get(key, [])
        _require(isinstance(ids, list), f"units.{key}: expected a list")
        for v in ids:
            _require(v in alias, f"units.{key}: node {v} not in graph")
        return tuple(sorted(alias[v] for v in ids))

    units = UnitRegistry(sources=_unit_list("sources"), sinks=_unit_list("sinks"),
                         storages=_unit_list("storages"))
    units.validate(graph)
    _require(len(units.sources) > 0, "units.sources: at least one source required")
    _require(len(units.sinks) > 0, "units.sinks: at least one sink required")
    overlap = sorted(set(units.sources) & set(units.sinks))
    if overlap:
        declared = {alias[v] for v in u.get("dual_role", []) if v in alias}
        undeclared = [v for v in overlap if v not in declared]
        _require(not undeclared,
                 f"units: nodes {undeclared} are both source and sink but not "
                 f"listed under units.dual_role")

    # --- timeline ---
    t = doc["timeline"]
    for key in ("tau_min", "N_t", "N_c", "M", "N_p"):
        _require(key in t, f"timeline: missing '{key}'")
    tau_min = float(t["tau_min"])
    n_t, n_c, m, n_p = int(t["N_t"]), int(t["N_c"]), int(t["M"]), int(t["N_p"])
    _require(tau_min > 0, f"timeline.tau_min must be positive, got {t['tau_min']}")
    _require(n_t >= 1, f"timeline.N_t must be >= 1, got {n_t}")
    _require(1 <= n_c <= n_t, f"timeline.N_c must be in 1..N_t, got {n_c}")
    _require(n_t % n_c == 0, f"timeline.N_c={n_c} does not divide N_t={n_t}")
    _require(1 <= m <= graph.n_nodes,
             f"timeline.M={m} must be in 1..{graph.n_nodes} (node count)")
    _require(n_p >= 1, f"timeline.N_p must be >= 1, got {n_p}")

    # --- profiles ---
    p = doc["profiles"]
    remap = lambda table: {alias[k_]: v_ for k_, v_ in table.items()}  # noqa: E731

    def _sect(key, orig_nodes, required=True):
        table = _load_profile_section(
            p, key, tuple(sorted(orig_nodes)), n_t, base, required=required)
        return remap(table) if table is not None else None

    inv_alias = {v: k for k, v in alias.items()}
    src_orig = [inv_alias[v] for v in units.sources]
    snk_orig = [inv_alias[v] for v in units.sinks]
    s_up = _sect("S_up", src_orig)
    s_dn = _sect("S_dn", src_orig)
    s_nom = _sect("S_nom", src_orig)
    d_up = _sect("D_up", snk_orig)
    d_dn = _sect("D_dn", snk_orig)
    d_nom = _sect("D_nom", snk_orig)
    d_actual = _sect("D_actual", snk_orig, required=False)

    for i in units.sources:
        name = inv_alias[i]
        bad = s_dn[i] > s_nom[i]
        if bad.any():
            raise ScenarioError(
                f"profiles: source {name} violates S_dn <= S_nom at step {_first_violation(bad)}")
        bad = s_nom[i] > s_up[i]
        if bad.any():
            raise ScenarioError(
                f"profiles: source {name} violates S_nom <= S_up at step {_first_violation(bad)}")
    for j in units.sinks:
        name = inv_alias[j]
        bad = d_dn[j] > d_nom[j]
        if bad.any():
            raise ScenarioError(
                f"profiles: sink {name} violates D_dn <= D_nom at step {_first_violation(bad)}")
        bad = d_nom[j] > d_up[j]
        if bad.any():
            raise ScenarioError(
                f"profiles: sink {name} violates D_nom <= D_up at step {_first_violation(bad)}")
        if d_actual is not None:
            bad = (d_actual[j] < d_dn[j]) | (d_actual[j] > d_up[j])
            if bad.any():
                raise ScenarioError(
                    f"profiles: sink {name} has D_actual outside [D_dn, D_up] "
                    f"at step {_first_violation(bad)}")

    # --- storage parameters ---
    storage: dict[int, StorageParams] = {}
    declared = {rec.get("node") for rec in u.get("storages_params", [])}
    params_list = u.get("storages_params", u.get("storage_params", []))
    by_node = {}
    for rec in params_list:
        _require("node" in rec, "units.storages_params: entry missing 'node'")
        by_node[rec["node"]] = rec
    for v in units.storages:
        name = inv_alias[v]
        rec = by_node.get(name)
        _require(rec is not None,
                 f"units.storages_params: storage node {name} has no parameters")
        arrs = {}
        for key in ("b_dn", "b_up", "e_dn", "e_up"):
            _require(key in rec, f"units.storages_params[{name}]: missing '{key}'")
            arrs[key] = _as_profile_array(rec[key], n_t,
                                          f"units.storages_params[{name}].{key}", base)
        _require("e0" in rec, f"units.storages_params[{name}]: missing 'e0'")
        e0 = float(rec["e0"])
        bad = arrs["b_dn"] > 0
        if bad.any():
            raise ScenarioError(
                f"storage {name}: b_dn > 0 at step {_first_violation(bad)}")
        bad = arrs["b_up"] < 0
        if bad.any():
            raise ScenarioError(
                f"storage {name}: b_up < 0 at step {_first_violation(bad)}")
        bad = arrs["e_dn"] > 0
        if bad.any():
            raise ScenarioError(
                f"storage {name}: e_dn > 0 at step {_first_violation(bad)}")
        bad = arrs["e_up"] < 0
        if bad.any():
            raise ScenarioError(
                f"storage {name}: e_up < 0 at step {_first_violation(bad)}")
        _require(arrs["e_dn"][0] <= e0 <= arrs["e_up"][0],
                 f"storage {name}: e0={e0} outside [e_dn(0), e_up(0)]")
        storage[v] = StorageParams(node=v, e0=e0, **arrs)
    unknown = declared - {None} - set(inv_alias[v] for v in units.storages)
    _require(not unknown,
             f"units.storages_params: nodes {sorted(unknown)} are not storages")

    timeline = ScenarioTimeline(
        tau_min=tau_min, n_t=n_t, n_c=n_c, m=m, n_p=n_p,
        s_up=s_up, s_dn=s_dn, s_nom=s_nom,
        d_up=d_up, d_dn=d_dn, d_nom=d_nom, d_actual=d_actual,
        storage=storage)
    return Scenario(graph=graph, units=units, timeline=timeline)


# ---------------------------------------------------------------------------
# serialization


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of parse_scenario, restoring the original node numbering."""
    graph, units, timeline = scenario
    inv = {v: k for k, v in graph.alias.items()} or {v: v for v in graph.nodes}
    doc: dict = {
        "graph": {
            "nodes": [inv[v] for v in graph.nodes],
            "edges": [{"a": inv[a], "b": inv[b], "length": graph.edge_length[(a, b)]}
                      for (a, b) in graph.edges],
        },
        "units": {
            "sources": [inv[v] for v in units.sources],
            "sinks": [inv[v] for v in units.sinks],
            "storages": [inv[v] for v in units.storages],
            "storages_params": [
                {
                    "node": inv[v],
                    "b_dn": timeline.storage[v].b_dn.tolist(),
                    "b_up": timeline.storage[v].b_up.tolist(),
                    "e_dn": timeline.storage[v].e_dn.tolist(),
                    "e_up": timeline.storage[v].e_up.tolist(),
                    "e0": timeline.storage[v].e0,
                }
                for v in units.storages
            ],
        },
        "timeline": {
            "tau_min": timeline.tau_min,
            "N_t": timeline.n_t,
            "N_c": timeline.n_c,
            "M": timeline.m,
            "N_p": timeline.n_p,
        },
        "profiles": {},
    }
    dual = sorted(set(units.sources) & set(units.sinks))
    if dual:
        doc["units"]["dual_role"] = [inv[v] for v in dual]

    def _dump(table):
        return {str(inv[v]): arr.tolist() for v, arr in table.items()}

    prof = doc["profiles"]
    prof["S_up"] = _dump(timeline.s_up)
    prof["S_dn"] = _dump(timeline.s_dn)
    prof["S_nom"] = _dump(timeline.s_nom)
    prof["D_up"] = _dump(timeline.d_up)
    prof["D_dn"] = _dump(timeline.d_dn)
    prof["D_nom"] = _dump(timeline.d_nom)
    if timeline.d_actual is not None:
        prof["D_actual"] = _dump(timeline.d_actual)
    return doc


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario)))


# ---------------------------------------------------------------------------
# synthetic actuals


def generate_actuals(timeline: ScenarioTimeline, seed: int) -> dict[int, np.ndarray]:
    """Synthesize D_actual as a seeded bounded random walk inside [D_dn, D_up].

    The walk runs in deviation space (around D_nom) and is clipped into the
    envelope at every step, so the result always validates.
    """
    rng = np.random.default_rng(seed)
    out: dict[int, np.ndarray] = {}
    for j in sorted(timeline.d_nom):
        lo = timeline.d_dn[j] - timeline.d_nom[j]
        hi = timeline.d_up[j] - timeline.d_nom[j]
        span = np.maximum(hi - lo, 0.0)
        dev = np.empty(timeline.n_t)
        level = 0.0
        for k in range(timeline.n_t):
            level += rng.normal(0.0, span[k] / 12.0 if span[k] > 0 else 0.0)
            level = float(np.clip(level, lo[k], hi[k]))
            dev[k] = level
        out[j] = timeline.d_nom[j] + dev
    return out


def with_actuals(scenario: Scenario, actuals: dict[int, np.ndarray]) -> Scenario:
    """Return a scenario equal to the input but carrying the given D_actual."""
    t = scenario.timeline
    new_t = ScenarioTimeline(
        tau_min=t.tau_min, n_t=t.n_t, n_c=t.n_c, m=t.m, n_p=t.n_p,
        s_up=t.s_up, s_dn=t.s_dn, s_nom=t.s_nom,
        d_up=t.d_up, d_dn=t.d_dn, d_nom=t.d_nom,
        d_actual={j: np.asarray(a, dtype=float) for j, a in actuals.items()},
        storage=t.storage)
    return Scenario(graph=scenario.graph, units=scenario.units, timeline=new_t)
