"""Distributed supervisory layer.

One agent per cluster splits the network-wide balancing request among
clusters, subject to each cluster's remaining reserve box, by running dual
consensus ADMM over a communication graph.  Every agent keeps a local copy
of the coupling dual variable and talks only to its graph neighbors; the
harness provides lockstep synchronous rounds with two message waves per
iteration (dual copies from the previous iteration, then the freshly updated
ones).  A centralized reference solver over the same data is used by tests
and by single-agent degenerate cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import csv
import numpy as np

from .network import fmt_float
from .optkernel import ConvexProgram, SolverError, solve

DEFAULT_PENALTY = 1.0
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500


@dataclass
class SupervisorProblem:
    """Requests, reserve boxes and cost weights for one activation."""

    requests: np.ndarray  # thresholded per-cluster slack r~
    box_dn: np.ndarray  # aggregate downward reserve, <= 0
    box_up: np.ndarray  # aggregate upward reserve, >= 0
    cost_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.requests = np.asarray(self.requests, dtype=float).ravel()
        m = self.requests.size
        self.box_dn = np.asarray(self.box_dn, dtype=float).reshape(m)
        self.box_up = np.asarray(self.box_up, dtype=float).reshape(m)
        if self.cost_weights is None:
            self.cost_weights = np.ones(m)
        self.cost_weights = np.asarray(self.cost_weights,
                                       dtype=float).reshape(m)
        if m == 0:
            raise ValueError("at least one cluster required")
        if np.any(self.box_dn > 1e-9) or np.any(self.box_up < -1e-9):
            raise ValueError("reserve boxes must contain 0")
        if np.any(self.box_dn > self.box_up):
            raise ValueError("reserve boxes crossed")
        if np.any(self.cost_weights <= 0):
            raise ValueError("cost weights must be positive")

    @property
    def m(self) -> int:
        return self.requests.size

    @property
    def q(self) -> float:
        return float(self.requests.sum())

    def is_feasible(self, q: float | None = None) -> bool:
        if q is None:
            q = self.q
        return float(self.box_dn.sum()) - 1e-12 <= q <= float(self.box_up.sum()) + 1e-12

    def clip_q(self) -> tuple[float, bool]:
        """Total request clipped into the aggregate reserve interval.
        Returns (clipped value, True when clipping changed it)."""
        q = self.q
        lo, hi = float(self.box_dn.sum()), float(self.box_up.sum())
        clipped = min(max(q, lo), hi)
        return clipped, abs(clipped - q) > 1e-12


def solve_centralized(problem: SupervisorProblem,
                      q: float | None = None) -> np.ndarray:
    """Reference solution of the commitment-splitting program."""
    if q is None:
        q = problem.q
    m = problem.m
    prog = ConvexProgram(q_diag=2.0 * problem.cost_weights, c=np.zeros(m),
                         a_eq=np.ones((1, m)), b_eq=np.array([q]),
                         lo=problem.box_dn.copy(), hi=problem.box_up.copy())
    sol = solve(prog)
    if sol.status != "optimal":
        raise SolverError(
            f"commitment split {sol.status}: total request {q} outside "
            f"aggregate reserves [{problem.box_dn.sum()}, {problem.box_up.sum()}]")
    return sol.x


# ---------------------------------------------------------------------------
# distributed agents

@dataclass(frozen=True)
class Message:
    sender: int
    iteration: int
    wave: str  # "prev" (lambda at i-1) or "curr" (lambda at i)
    lam: float


class ProtocolError(RuntimeError):
    """A round was violated: wrong sender set, iteration, or wave tag."""


@dataclass
class CommGraph:
    """Undirected connected graph over agent ids 1..m."""

    m: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for (a, b) in self.edges:
            if not (1 <= a < b <= self.m):
                raise ValueError(f"bad communication edge ({a}, {b})")
        if self.m > 1 and not self._connected():
            raise ValueError("communication graph must be connected")

    def _connected(self) -> bool:
        seen = {1}
        stack = [1]
        adj = self.adjacency()
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.m

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {h: [] for h in range(1, self.m + 1)}
        for (a, b) in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for h in adj:
            adj[h].sort()
        return adj

    def neighbors(self, h: int) -> list[int]:
        return self.adjacency()[h]


def comm_complete(m: int) -> CommGraph:
    edges = frozenset((a, b) for a in range(1, m + 1)
                      for b in range(a + 1, m + 1))
    return CommGraph(m=m, edges=edges)


def comm_ring(m: int) -> CommGraph:
    if m <= 1:
        return CommGraph(m=m, edges=frozenset())
    if m == 2:
        return CommGraph(m=2, edges=frozenset({(1, 2)}))
    edges = {(h, h + 1) for h in range(1, m)} | {(1, m)}
    return CommGraph(m=m, edges=frozenset(edges))


def comm_from_file(path: str | Path, m: int) -> CommGraph:
    """Load 'a,b' edge lines (comments with #) into a CommGraph."""
    edges = set()
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        a_s, b_s = line.replace(",", " ").split()
        a, b = int(a_s), int(b_s)
        if a == b:
            raise ValueError(f"self-loop {a} in communication graph file")
        edges.add((min(a, b), max(a, b)))
    return CommGraph(m=m, edges=frozenset(edges))


@dataclass
class SupervisorAgent:
    """One cluster's supervisor-side state machine."""

    agent_id: int
    box_dn: float
    box_up: float
    cost_weight: float
    q: float
    m: int
    neighbors: tuple[int, ...]
    penalty: float = DEFAULT_PENALTY
    lam: float = 0.0
    p: float = 0.0
    x: float = 0.0
    iteration: int = field(default=0)

    def _take(self, inbox: Iterable[Message], wave: str) -> dict[int, float]:
        got: dict[int, float] = {}
        for msg in inbox:
            if msg.wave != wave or msg.iteration != self.iteration + 1:
                raise ProtocolError(
                    f"agent {self.agent_id} got wave={msg.wave!r} "
                    f"iter={msg.iteration} during {wave!r} of iteration "
                    f"{self.iteration + 1}")
            if msg.sender not in self.neighbors or msg.sender in got:
                raise ProtocolError(
                    f"agent {self.agent_id}: unexpected sender {msg.sender}")
            got[msg.sender] = msg.lam
        missing = set(self.neighbors) - set(got)
        if missing:
            raise ProtocolError(
                f"agent {self.agent_id}: missing messages from {sorted(missing)}")
        return got

    def primal_update(self, inbox: Iterable[Message]) -> Message:
        """New x from the box-projected closed form, then the local dual
        copy; emits this iteration's dual value to neighbors.

        The quadratic being minimized is
            f_h(x) + (1/(4 c n_h)) (x - q/M - p + c * sum_j(lam_h + lam_j))^2
        whose unconstrained minimizer is clipped to the reserve box, and the
        dual copy moves to the joint saddle value of the same expression.
        """
        lam_prev = self._take(inbox, "prev")
        n_h = len(self.neighbors)
        c = self.penalty
        # deterministic summation: neighbor ids ascending
        agg = sum(self.lam + lam_prev[j] for j in sorted(lam_prev))
        x_unc = (self.q / self.m + self.p - c * agg) / \
            (1.0 + 4.0 * n_h * c * self.cost_weight)
        self.x = min(max(x_unc, self.box_dn), self.box_up)
        self.lam = (self.x - self.q / self.m - self.p + c * agg) \
            / (2.0 * c * n_h)
        return Message(sender=self.agent_id, iteration=self.iteration + 1,
                       wave="curr", lam=self.lam)

    def dual_update(self, inbox: Iterable[Message]) -> None:
        """Step 9: fold the fresh neighbor duals into the running offset."""
        lam_curr = self._take(inbox, "curr")
        c = self.penalty
        disagree = sum(self.lam - lam_curr[j] for j in sorted(lam_curr))
        self.p += c * disagree
        self.iteration += 1

    def share_prev(self) -> Message:
        """Wave A payload: the dual copy from the last completed iteration."""
        return Message(sender=self.agent_id, iteration=self.iteration + 1,
                       wave="prev", lam=self.lam)


@dataclass
class DcadmmResult:
    dy: np.ndarray
    n_iterations: int
    converged: bool
    consensus_residual: float
    coupling_residual: float
    trace: list[dict]  # one row per agent per iteration


def run_dcadmm(problem: SupervisorProblem, comm: CommGraph,
               penalty: float = DEFAULT_PENALTY, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER,
               q: float | None = None) -> DcadmmResult:
    """Synchronous DC-ADMM rounds until consensus + coupling residuals pass.

    The stopping test is a harness-level reduction over all agents; agents
    themselves only ever see neighbor messages.  On max_iter exhaustion the
    best iterate (smallest combined residual) is returned with
    converged=False.
    """
    if comm.m != problem.m:
        raise ValueError("communication graph size != cluster count")
    if q is None:
        q = problem.q
    if problem.m == 1:
        x = min(max(q, float(problem.box_dn[0])), float(problem.box_up[0]))
        res = abs(x - q)
        trace = [{"iter": 1, "agent": 1, "x": x, "lambda": 0.0, "p": 0.0,
                  "consensus_residual": 0.0, "coupling_residual": res}]
        return DcadmmResult(dy=np.array([x]), n_iterations=1,
                            converged=res <= tol, consensus_residual=0.0,
                            coupling_residual=res, trace=trace)

    adjacency = comm.adjacency()
    agents = [SupervisorAgent(agent_id=h, box_dn=float(problem.box_dn[h - 1]),
                              box_up=float(problem.box_up[h - 1]),
                              cost_weight=float(problem.cost_weights[h - 1]),
                              q=q, m=problem.m,
                              neighbors=tuple(adjacency[h]), penalty=penalty)
              for h in range(1, problem.m + 1)]
    by_id = {a.agent_id: a for a in agents}
    trace: list[dict] = []
    best: tuple[float, np.ndarray, float, float, int] | None = None
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        # wave A: everyone shares lambda from iteration i-1
        wave_a = {a.agent_id: a.share_prev() for a in agents}
        # steps 7-8, then wave B with the fresh lambda
        wave_b = {}
        for a in agents:
            inbox = [wave_a[j] for j in a.neighbors]
            wave_b[a.agent_id] = a.primal_update(inbox)
        # step 9
        for a in agents:
            a.dual_update([wave_b[j] for j in a.neighbors])

        x_vec = np.array([a.x for a in agents])
        consensus = max(abs(by_id[h].lam - by_id[j].lam)
                        for h in by_id for j in by_id[h].neighbors)
        coupling = abs(float(x_vec.sum()) - q)
        for a in agents:
            trace.append({"iter": it, "agent": a.agent_id, "x": a.x,
                          "lambda": a.lam, "p": a.p,
                          "consensus_residual": consensus,
                          "coupling_residual": coupling})
        combined = max(consensus, coupling)
        if best is None or combined < best[0]:
            best = (combined, x_vec.copy(), consensus, coupling, it)
        if consensus <= tol and coupling <= tol:
            converged = True
            break
    assert best is not None
    _, x_best, cons_best, coup_best, _ = best
    if converged:
        x_best = np.array([a.x for a in agents])
        cons_best, coup_best = consensus, coupling
    return DcadmmResult(dy=x_best, n_iterations=it, converged=converged,
                        consensus_residual=cons_best,
                        coupling_residual=coup_best, trace=trace)


def dump_trace_csv(result: DcadmmResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "agent", "x", "lambda", "p",
                         "consensus_residual", "coupling_residual"])
        for row in result.trace:
            writer.writerow([row["iter"], row["agent"], fmt_float(row["x"]),
                             fmt_float(row["lambda"]), fmt_float(row["p"]),
                             fmt_float(row["consensus_residual"]),
                             fmt_float(row["coupling_residual"])])
