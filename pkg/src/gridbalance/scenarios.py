"""Built-in scenarios: small worked examples plus the synthetic 118-node day.

Every builder assembles a plain scenario document and runs it through
``parse_scenario`` so the file-format validation applies to generated data too.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .network import Scenario, generate_actuals, parse_scenario, with_actuals

DEFAULT_DAY_SEED = 20240817

# Layout constants for the synthetic day.  Communities are path graphs with
# the sources in the middle and sinks out to both endpoints, so every internal
# edge carries planned flow; bridges are long enough that serving any sink
# across a bridge is strictly costlier than serving it locally.  Both together
# make the community split the unique minimum balanced cut.
_COMMUNITY_SIZES = (30, 30, 29, 29)
_PATH_LENGTH = 1.0
_BRIDGE_LENGTH = 12.0
_SOURCE_OFFSETS = tuple(range(10, 20))
_LEFT_SINK_OFFSETS = (0, 2, 4, 6, 8, 9)
_SOURCE_POWER = 4.0  # MW, symmetric envelope
# Side demand exceeds same-side source capacity at every split point of the
# source block (left: 6*3.5 > 5*4; right: 6*2.8 > 4*4), so planned flow must
# cross every inner edge of the block and no internal edge is ever weightless.
_LEFT_SINK_POWER = 3.5
_RIGHT_SINK_POWER = 2.8
_BATTERY_POWER = 2.0
# Energy envelope span must stay below the swing a horizon-length window can
# recover (N_p * tau * power = 2 MWh), or the period-end return target turns
# infeasible once the shrinking horizon first reaches the boundary.
_BATTERY_ENERGY = 0.8  # MWh
_DEFICIT_ENVELOPE = 0.4  # MW, upward only
_DEFICIT_PEAK = 0.3  # MW reached after _DEFICIT_RAMP_STEPS
_DEFICIT_RAMP_STEPS = 56
_DEFICIT_SINK_OFFSET = 8  # node 9, inside the first community


class DayLayout(NamedTuple):
    """Node groupings of the synthetic day, fixed independent of the seed."""

    communities: tuple[tuple[int, ...], ...]
    sources: tuple[tuple[int, ...], ...]
    sinks: tuple[tuple[int, ...], ...]
    bridges: tuple[tuple[int, int], ...]
    deficit_sink: int
    deficit_community: int  # index into communities


def day_layout() -> DayLayout:
    starts = []
    acc = 1
    for size in _COMMUNITY_SIZES:
        starts.append(acc)
        acc += size
    communities = tuple(
        tuple(range(start, start + size))
        for start, size in zip(starts, _COMMUNITY_SIZES))
    sources = []
    sinks = []
    for comm in communities:
        size = len(comm)
        right = (20, 22, 24, 26, 28, 29) if size == 30 else (20, 21, 22, 24, 26, 28)
        sources.append(tuple(comm[o] for o in _SOURCE_OFFSETS))
        sinks.append(tuple(comm[o] for o in _LEFT_SINK_OFFSETS + right))
    bridges = tuple(
        (communities[c][-1], communities[(c + 1) % len(communities)][0])
        for c in range(len(communities)))
    return DayLayout(
        communities=communities,
        sources=tuple(sources),
        sinks=tuple(sinks),
        bridges=bridges,
        deficit_sink=communities[0][_DEFICIT_SINK_OFFSET],
        deficit_community=0)


def _day_edges(layout: DayLayout) -> list[dict]:
    edges: list[dict] = []
    for comm in layout.communities:
        for i in range(len(comm) - 1):
            edges.append({"a": comm[i], "b": comm[i + 1], "length": _PATH_LENGTH})
    for a, b in layout.bridges:
        edges.append({"a": a, "b": b, "length": _BRIDGE_LENGTH})
    return edges


def deficit_ramp(n_steps: int) -> np.ndarray:
    """Demand trajectory of the deficit sink over the final period: a slow ramp
    to the peak, then flat.  The per-step increment stays well below the network
    balance tolerance so commitments track requests without visible lag."""
    t = np.arange(n_steps, dtype=float)
    return np.minimum(_DEFICIT_PEAK, t * (_DEFICIT_PEAK / _DEFICIT_RAMP_STEPS))


def build_synthetic_day(seed: int = DEFAULT_DAY_SEED) -> Scenario:
    """Synthetic 118-node day: 288 five-minute steps, four clustering periods.

    Four ring-and-chord communities joined by single long bridges.  Each
    community carries ten sources (all with storage) and twelve sinks.  In the
    final period the first community loses all source and storage flexibility
    and all of its demand except one sink whose consumption ramps up, so that
    community must be helped by the rest of the network.
    """
    layout = day_layout()
    n_t, n_c, n_p = 288, 72, 12
    last = range(3 * n_c, n_t)  # absolute steps of the final period

    all_sources = [v for group in layout.sources for v in group]
    all_sinks = [v for group in layout.sinks for v in group]
    deficit = layout.deficit_sink
    comm0_sources = set(layout.sources[layout.deficit_community])
    comm0_sinks = set(layout.sinks[layout.deficit_community])
    n_left = len(_LEFT_SINK_OFFSETS)
    sink_power = {v: _LEFT_SINK_POWER if idx < n_left else _RIGHT_SINK_POWER
                  for group in layout.sinks for idx, v in enumerate(group)}

    def _profile(base: float, collapse: bool) -> list[float]:
        arr = np.full(n_t, base)
        if collapse:
            arr[list(last)] = 0.0
        return arr.tolist()

    profiles: dict = {"S_up": {}, "S_dn": {}, "S_nom": {},
                      "D_up": {}, "D_dn": {}, "D_nom": {}}
    for v in all_sources:
        dead = v in comm0_sources
        profiles["S_up"][v] = _profile(_SOURCE_POWER, dead)
        profiles["S_dn"][v] = _profile(-_SOURCE_POWER, dead)
        profiles["S_nom"][v] = 0.0
    for v in all_sinks:
        if v == deficit:
            up = np.full(n_t, sink_power[v])
            dn = np.full(n_t, -sink_power[v])
            up[list(last)] = _DEFICIT_ENVELOPE
            dn[list(last)] = 0.0
            profiles["D_up"][v] = up.tolist()
            profiles["D_dn"][v] = dn.tolist()
        else:
            dead = v in comm0_sinks
            profiles["D_up"][v] = _profile(sink_power[v], dead)
            profiles["D_dn"][v] = _profile(-sink_power[v], dead)
        profiles["D_nom"][v] = 0.0

    storages_params = []
    for v in all_sources:
        dead = v in comm0_sources
        storages_params.append({
            "node": v,
            "b_up": _profile(_BATTERY_POWER, dead),
            "b_dn": _profile(-_BATTERY_POWER, dead),
            "e_up": _BATTERY_ENERGY,
            "e_dn": -_BATTERY_ENERGY,
            "e0": 0.0,
        })

    doc = {
        "graph": {"nodes": list(range(1, sum(_COMMUNITY_SIZES) + 1)),
                  "edges": _day_edges(layout)},
        "units": {"sources": all_sources, "sinks": all_sinks,
                  "storages": all_sources, "storages_params": storages_params},
        "timeline": {"tau_min": 5.0, "N_t": n_t, "N_c": n_c, "M": 4, "N_p": n_p},
        "profiles": profiles,
    }
    scenario = parse_scenario(doc)

    actuals = generate_actuals(scenario.timeline, seed)
    for j in comm0_sinks:
        actuals[j][list(last)] = 0.0
    actuals[deficit][list(last)] = deficit_ramp(n_c)
    return with_actuals(scenario, actuals)


def figure_example_scenario() -> Scenario:
    """Seven-node single-step network with one source and one sink.

    The worked example used throughout the docs: source at node 6, sink at
    node 7, unit edge lengths, a single time step.  The cheapest route from 6
    to 7 runs 6-4-2-7 at cost 3.
    """
    doc = {
        "graph": {
            "nodes": [1, 2, 3, 4, 5, 6, 7],
            "edges": [{"a": a, "b": b, "length": 1.0}
                      for a, b in [(1, 2), (1, 3), (2, 4), (2, 7),
                                   (3, 5), (4, 6), (5, 6)]],
        },
        "units": {"sources": [6], "sinks": [7], "storages": []},
        "timeline": {"tau_min": 5.0, "N_t": 1, "N_c": 1, "M": 2, "N_p": 1},
        "profiles": {
            "S_up": {6: 10.0}, "S_dn": {6: -10.0}, "S_nom": {6: 0.0},
            "D_up": {7: 10.0}, "D_dn": {7: -10.0}, "D_nom": {7: 0.0},
            "D_actual": {7: 0.0},
        },
    }
    return parse_scenario(doc)


def two_node_minimal() -> Scenario:
    """Smallest useful scenario: one source with storage feeding one sink."""
    doc = {
        "graph": {"nodes": [1, 2],
                  "edges": [{"a": 1, "b": 2, "length": 1.0}]},
        "units": {"sources": [1], "sinks": [2], "storages": [1],
                  "storages_params": [{"node": 1, "b_up": 2.0, "b_dn": -2.0,
                                       "e_up": 1.0, "e_dn": -1.0, "e0": 0.0}]},
        "timeline": {"tau_min": 5.0, "N_t": 4, "N_c": 2, "M": 1, "N_p": 2},
        "profiles": {
            "S_up": {1: 5.0}, "S_dn": {1: -5.0}, "S_nom": {1: 0.0},
            "D_up": {2: 1.0}, "D_dn": {2: -1.0}, "D_nom": {2: 0.0},
            "D_actual": {2: [0.2, -0.1, 0.3, 0.0]},
        },
    }
    return parse_scenario(doc)
