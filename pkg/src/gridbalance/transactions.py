"""Worst-case power transactions between sources and sinks, and their
projection onto the grid as edge usage weights.

For every step of a clustering period two LPs are solved over pairwise
transactions x_ij and a per-sink slack: one covering the aggregate upward
demand envelope, one the downward envelope.  Transaction costs are the
shortest-path costs between the units; slack is priced strictly above every
path so it only absorbs demand that no source can reach.  The per-pair
average magnitude of the two solutions is then pushed onto the edges of the
stored shortest path, signed by traversal direction, and the per-step net
flows accumulate into nonnegative edge weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .network import (Edge, NetworkGraph, VariationBounds, canonical_edge,
                      fmt_float)
from .optkernel import SolverError, solve_lp_abs
from .paths import PathTable


@dataclass
class TransactionPlan:
    """Solved P-up/P-down transactions for each step of one period."""

    pairs: list[tuple[int, int]]  # (source, sink), source-major order
    steps: list[int]  # absolute step indices
    x_up: np.ndarray  # (n_steps, n_pairs)
    x_dn: np.ndarray
    x_avg: np.ndarray  # elementwise (|x_up| + |x_dn|) / 2
    slack_up: np.ndarray  # (n_steps, n_sinks)
    slack_dn: np.ndarray
    objective_up: np.ndarray  # (n_steps,)
    objective_dn: np.ndarray
    slack_cost: float

    @property
    def sinks(self) -> list[int]:
        seen: list[int] = []
        for _, j in self.pairs:
            if j not in seen:
                seen.append(j)
        return seen


def slack_cost_for(table: PathTable, cs_mult: float = 10.0) -> float:
    """Slack price strictly above every path cost; positive even when all
    paths are free (a node that is both source and sink has cost 0)."""
    top = table.max_cost()
    return max(cs_mult * top, 1.0)


def solve_transactions(bounds: VariationBounds, table: PathTable,
                       steps: Iterable[int], slack_cost: float | None = None,
                       cs_mult: float = 10.0) -> TransactionPlan:
    """Solve the up/down envelope transaction LPs for the given steps."""
    sources = list(table.sources)
    sinks = list(table.sinks)
    pairs = [(i, j) for i in sources for j in sinks]
    n_pair, n_snk, n_src = len(pairs), len(sinks), len(sources)
    costs = np.array([table.costs[p] for p in pairs])
    if slack_cost is None:
        slack_cost = slack_cost_for(table, cs_mult)
    if slack_cost <= costs.max(initial=0.0):
        raise ValueError(
            f"slack cost {slack_cost} must exceed the largest path cost "
            f"{costs.max(initial=0.0)}")
    steps = list(steps)

    n_var = n_pair + n_snk
    weights = np.concatenate([costs, np.full(n_snk, slack_cost)])
    # per-sink balance: sum_i x_ij + slack_j = demand_j
    a_eq = np.zeros((n_snk, n_var))
    for p, (_, j) in enumerate(pairs):
        a_eq[sinks.index(j), p] = 1.0
    for jj in range(n_snk):
        a_eq[jj, n_pair + jj] = 1.0
    # per-source envelope: s_dn <= sum_j x_ij <= s_up
    a_src = np.zeros((n_src, n_var))
    for p, (i, _) in enumerate(pairs):
        a_src[sources.index(i), p] = 1.0
    a_in = np.vstack([a_src, -a_src])

    x_up = np.zeros((len(steps), n_pair))
    x_dn = np.zeros((len(steps), n_pair))
    slack_up = np.zeros((len(steps), n_snk))
    slack_dn = np.zeros((len(steps), n_snk))
    obj_up = np.zeros(len(steps))
    obj_dn = np.zeros(len(steps))
    for row, k in enumerate(steps):
        s_up_k = np.array([bounds.s_up[i][k] for i in sources])
        s_dn_k = np.array([bounds.s_dn[i][k] for i in sources])
        b_in = np.concatenate([s_up_k, -s_dn_k])
        for direction, demand_key in (("up", bounds.d_up), ("dn", bounds.d_dn)):
            demand = np.array([demand_key[j][k] for j in sinks])
            sol = solve_lp_abs(weights, a_eq=a_eq, b_eq=demand,
                               a_in=a_in, b_in=b_in)
            if sol.status != "optimal":
                raise SolverError(
                    f"transaction LP ({direction}) at step {k} is {sol.status}")
            if direction == "up":
                x_up[row] = sol.x[:n_pair]
                slack_up[row] = sol.x[n_pair:]
                obj_up[row] = sol.objective_value
            else:
                x_dn[row] = sol.x[:n_pair]
                slack_dn[row] = sol.x[n_pair:]
                obj_dn[row] = sol.objective_value
    x_avg = 0.5 * (np.abs(x_up) + np.abs(x_dn))
    return TransactionPlan(pairs=pairs, steps=steps, x_up=x_up, x_dn=x_dn,
                           x_avg=x_avg, slack_up=slack_up, slack_dn=slack_dn,
                           objective_up=obj_up, objective_dn=obj_dn,
                           slack_cost=slack_cost)


def step_edge_flows(plan: TransactionPlan, table: PathTable,
                    row: int) -> dict[Edge, float]:
    """Net signed flow per edge for one step row of the plan.

    A transaction's magnitude enters each edge [a, b] of its stored path with
    sign +1 when traversed low-to-high node id and -1 otherwise, so opposing
    transactions across the same edge cancel.
    """
    net: dict[Edge, float] = {}
    for p, (i, j) in enumerate(plan.pairs):
        amount = plan.x_avg[row, p]
        if amount == 0.0:
            continue
        for (a, b) in table.traversal_edges(i, j):
            e = canonical_edge(a, b)
            net[e] = net.get(e, 0.0) + (amount if a < b else -amount)
    return net


def project_transactions(plan: TransactionPlan, table: PathTable) -> dict[Edge, float]:
    """Edge usage weights: per-step absolute net flow, summed over the period."""
    weights: dict[Edge, float] = {}
    for row in range(len(plan.steps)):
        for e, flow in step_edge_flows(plan, table, row).items():
            weights[e] = weights.get(e, 0.0) + abs(flow)
    return weights


def full_edge_weights(weights: dict[Edge, float],
                      graph: NetworkGraph) -> dict[Edge, float]:
    """Extend a sparse projection onto every graph edge (uncrossed -> 0)."""
    return {e: weights.get(e, 0.0) for e in graph.edges}


def dump_transactions_csv(plan: TransactionPlan, path: str | Path) -> None:
    sinks = plan.sinks
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "source", "sink", "x_up", "x_dn", "x_avg",
                         "slack_up", "slack_dn"])
        for row, k in enumerate(plan.steps):
            for p, (i, j) in enumerate(plan.pairs):
                jj = sinks.index(j)
                writer.writerow([k, i, j, fmt_float(plan.x_up[row, p]),
                                 fmt_float(plan.x_dn[row, p]),
                                 fmt_float(plan.x_avg[row, p]),
                                 fmt_float(plan.slack_up[row, jj]),
                                 fmt_float(plan.slack_dn[row, jj])])


def dump_edge_weights_csv(weights: dict[Edge, float], graph: NetworkGraph,
                          path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "b", "w"])
        for (a, b) in graph.edges:
            writer.writerow([a, b, fmt_float(weights.get((a, b), 0.0))])
