"""Per-cluster shrinking-horizon MPC.

Each cluster dispatches its sources and batteries against measured sink
deviations so that cluster output tracks the supervisor's previous
commitment.  A heavily penalized slack absorbs whatever the cluster cannot
balance; its first-step value, once above a small threshold, becomes the
request forwarded to the supervisor.  Battery energies are pure integrators
and must return to their period-start level by the period boundary, which is
what shrinks the horizon near the end of the period.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .optkernel import ConvexProgram, SolverError, solve

DEFAULT_GAMMA_SOURCE = 1.0
DEFAULT_GAMMA_BATTERY = 1.0
DEFAULT_GAMMA_REQUEST = 1e6
DEFAULT_REQUEST_THRESHOLD = 1e-3  # MW


def _as_matrix(arr, n_rows: int, n_cols: int, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if out.shape != (n_rows, n_cols):
        raise ValueError(f"{name} must have shape ({n_rows}, {n_cols}), "
                         f"got {out.shape}")
    return out


@dataclass
class ClusterModel:
    """Everything one cluster's controller needs for one clustering period.

    Bound arrays are indexed by step relative to the period start, shape
    (n_units, n_c).  ``e_ref`` is the energy deviation each battery must
    return to at the period boundary.
    """

    cluster_id: int
    source_nodes: tuple[int, ...]
    battery_nodes: tuple[int, ...]
    sink_nodes: tuple[int, ...]
    s_dn: np.ndarray
    s_up: np.ndarray
    b_dn: np.ndarray
    b_up: np.ndarray
    e_dn: np.ndarray
    e_up: np.ndarray
    e_ref: np.ndarray
    tau_hours: float
    n_p: int
    n_c: int
    gamma_source: float = DEFAULT_GAMMA_SOURCE
    gamma_battery: float = DEFAULT_GAMMA_BATTERY
    gamma_request: float = DEFAULT_GAMMA_REQUEST
    request_threshold: float = DEFAULT_REQUEST_THRESHOLD

    def __post_init__(self) -> None:
        ns, nb, nc = len(self.source_nodes), len(self.battery_nodes), self.n_c
        self.s_dn = _as_matrix(self.s_dn, ns, nc, "s_dn")
        self.s_up = _as_matrix(self.s_up, ns, nc, "s_up")
        self.b_dn = _as_matrix(self.b_dn, nb, nc, "b_dn")
        self.b_up = _as_matrix(self.b_up, nb, nc, "b_up")
        self.e_dn = _as_matrix(self.e_dn, nb, nc, "e_dn")
        self.e_up = _as_matrix(self.e_up, nb, nc, "e_up")
        self.e_ref = np.asarray(self.e_ref, dtype=float).reshape(nb)
        if self.tau_hours <= 0:
            raise ValueError("tau_hours must be positive")
        if not (1 <= self.n_p and 1 <= self.n_c):
            raise ValueError("horizon and period lengths must be positive")
        if np.any(self.s_dn > self.s_up + 1e-12):
            raise ValueError("source bounds crossed (s_dn > s_up)")
        if np.any(self.b_dn > 1e-12) or np.any(self.b_up < -1e-12):
            raise ValueError("battery power boxes must contain 0")
        if np.any(self.e_dn > 1e-12) or np.any(self.e_up < -1e-12):
            raise ValueError("battery energy boxes must contain 0")
        for g, name in ((self.gamma_source, "gamma_source"),
                        (self.gamma_battery, "gamma_battery"),
                        (self.gamma_request, "gamma_request")):
            if g <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_sources(self) -> int:
        return len(self.source_nodes)

    @property
    def n_batteries(self) -> int:
        return len(self.battery_nodes)


@dataclass
class MpcResult:
    status: str
    horizon: int
    s_first: np.ndarray  # (n_sources,)
    b_first: np.ndarray  # (n_batteries,)
    r_first: float
    r_request: float  # thresholded slack forwarded to the supervisor
    reserve_up: float
    reserve_dn: float
    e_traj: np.ndarray  # (n_batteries, horizon + 1) predicted energies
    s_plan: np.ndarray  # (n_sources, horizon)
    b_plan: np.ndarray  # (n_batteries, horizon)
    r_plan: np.ndarray  # (horizon,)
    objective: float
    output_first: float = field(default=0.0)  # sum(s) + sum(b) - sum(d) at k


class MpcInfeasibleError(SolverError):
    """Battery boxes conflict with the terminal energy constraint."""


def horizon_length(model: ClusterModel, k: int) -> int:
    """Steps covered from k: full n_p until the period boundary cuts it."""
    if not 0 <= k <= model.n_c - 1:
        raise ValueError(f"step {k} outside period [0, {model.n_c - 1}]")
    return min(model.n_p, model.n_c - k)


def persistence_forecast(d_measured: Sequence[float], horizon: int) -> np.ndarray:
    """Hold the measured per-sink deviations constant over the horizon."""
    col = np.asarray(d_measured, dtype=float).reshape(-1, 1)
    return np.repeat(col, horizon, axis=1)


def _diagnose_battery(model: ClusterModel, k: int, horizon: int,
                      e_current: np.ndarray, terminal: bool) -> str:
    """Interval-propagate each battery to name the conflicting constraint."""
    tau = model.tau_hours
    for l, node in enumerate(model.battery_nodes):
        lo = hi = float(e_current[l])
        for t in range(horizon):
            step = k + t
            lo -= tau * model.b_up[l, step]
            hi -= tau * model.b_dn[l, step]
            if k + t + 1 <= model.n_c - 1:
                box_lo = model.e_dn[l, k + t + 1]
                box_hi = model.e_up[l, k + t + 1]
                lo, hi = max(lo, box_lo), min(hi, box_hi)
                if lo > hi + 1e-12:
                    return (f"battery at node {node}: energy box "
                            f"[{box_lo}, {box_hi}] unreachable at period "
                            f"step {k + t + 1}")
        if terminal and not (lo - 1e-12 <= model.e_ref[l] <= hi + 1e-12):
            return (f"battery at node {node}: terminal energy {model.e_ref[l]}"
                    f" outside reachable range [{lo}, {hi}]")
    return "battery constraints jointly infeasible"


def solve_local_mpc(model: ClusterModel, k: int, d_forecast: np.ndarray,
                    dy_prev: float, e_current: Sequence[float]) -> MpcResult:
    """Solve the cluster dispatch QP at period step k.

    ``d_forecast`` is either a (n_sinks, horizon) matrix of per-sink
    deviation forecasts or a length-horizon vector of cluster totals; only
    the per-step total enters the program.
    """
    horizon = horizon_length(model, k)
    terminal = (horizon == model.n_c - k)
    ns, nb = model.n_sources, model.n_batteries
    e_current = np.asarray(e_current, dtype=float).reshape(nb)
    d_forecast = np.asarray(d_forecast, dtype=float)
    if d_forecast.ndim == 2:
        d_tot = d_forecast.sum(axis=0)
    else:
        d_tot = d_forecast
    if d_tot.shape != (horizon,):
        raise ValueError(f"forecast must cover {horizon} steps, "
                         f"got shape {d_forecast.shape}")

    nv = ns + nb + 1  # s block, b block, slack; t-major layout
    n = nv * horizon

    def s_idx(t: int) -> slice:
        return slice(t * nv, t * nv + ns)

    def b_idx(t: int) -> slice:
        return slice(t * nv + ns, t * nv + ns + nb)

    def r_idx(t: int) -> int:
        return t * nv + ns + nb

    # normalize weights so the kernel sees O(1) curvature; the argmin is
    # unchanged and the true objective is restored afterwards
    scale = max(model.gamma_source, model.gamma_battery, model.gamma_request)
    q_diag = np.empty(n)
    lo = np.empty(n)
    hi = np.empty(n)
    for t in range(horizon):
        step = k + t
        q_diag[s_idx(t)] = 2.0 * model.gamma_source / scale
        q_diag[b_idx(t)] = 2.0 * model.gamma_battery / scale
        q_diag[r_idx(t)] = 2.0 * model.gamma_request / scale
        lo[s_idx(t)] = model.s_dn[:, step]
        hi[s_idx(t)] = model.s_up[:, step]
        lo[b_idx(t)] = model.b_dn[:, step]
        hi[b_idx(t)] = model.b_up[:, step]
        lo[r_idx(t)] = -np.inf
        hi[r_idx(t)] = np.inf

    # balance at every horizon step: sum(s) + sum(b) + r = dy_prev + d_tot
    eq_rows = [np.zeros(n) for _ in range(horizon)]
    eq_rhs = [dy_prev + d_tot[t] for t in range(horizon)]
    for t in range(horizon):
        eq_rows[t][s_idx(t)] = 1.0
        eq_rows[t][b_idx(t)] = 1.0
        eq_rows[t][r_idx(t)] = 1.0
    # terminal energy: e(n_c) back to the period-start anchor
    if terminal and nb:
        tau = model.tau_hours
        for l in range(nb):
            row = np.zeros(n)
            for t in range(horizon):
                row[b_idx(t).start + l] = 1.0
            eq_rows.append(row)
            eq_rhs.append((e_current[l] - model.e_ref[l]) / tau)
    a_eq = np.array(eq_rows)
    b_eq = np.array(eq_rhs)

    # energy boxes on the integrator state, rows only where a box applies
    in_rows: list[np.ndarray] = []
    in_rhs: list[float] = []
    if nb:
        tau = model.tau_hours
        for t in range(horizon):
            if k + t + 1 > model.n_c - 1:
                break  # period-boundary energy is pinned by the terminal row
            for l in range(nb):
                row = np.zeros(n)
                for tt in range(t + 1):
                    row[b_idx(tt).start + l] = -tau
                # e_cur - tau * sum b  <= e_up   and   >= e_dn
                in_rows.append(row)
                in_rhs.append(model.e_up[l, k + t + 1] - e_current[l])
                in_rows.append(-row)
                in_rhs.append(e_current[l] - model.e_dn[l, k + t + 1])
    a_in = np.array(in_rows) if in_rows else None
    b_in = np.array(in_rhs) if in_rhs else None

    prog = ConvexProgram(q_diag=q_diag, c=np.zeros(n), a_eq=a_eq, b_eq=b_eq,
                         a_in=a_in, b_in=b_in, lo=lo, hi=hi)
    sol = solve(prog)
    if sol.status != "optimal":
        detail = _diagnose_battery(model, k, horizon, e_current, terminal)
        raise MpcInfeasibleError(
            f"cluster {model.cluster_id} dispatch at period step {k} is "
            f"{sol.status}: {detail}")

    x = sol.x
    s_plan = np.column_stack([x[s_idx(t)] for t in range(horizon)]) \
        if ns else np.zeros((0, horizon))
    b_plan = np.column_stack([x[b_idx(t)] for t in range(horizon)]) \
        if nb else np.zeros((0, horizon))
    r_plan = np.array([x[r_idx(t)] for t in range(horizon)])
    e_traj = np.zeros((nb, horizon + 1))
    if nb:
        e_traj[:, 0] = e_current
        for t in range(horizon):
            e_traj[:, t + 1] = e_traj[:, t] - model.tau_hours * b_plan[:, t]

    s_first = s_plan[:, 0] if ns else np.zeros(0)
    b_first = b_plan[:, 0] if nb else np.zeros(0)
    r_first = float(r_plan[0])
    r_request = r_first if abs(r_first) > model.request_threshold else 0.0
    reserve_up = float(np.sum(model.s_up[:, k] - s_first))
    reserve_dn = float(np.sum(model.s_dn[:, k] - s_first))
    # contiguous 1-D sums so log verification can reproduce this float exactly
    d_first = np.ascontiguousarray(d_forecast[:, 0]) if d_forecast.ndim == 2 \
        else np.asarray([d_tot[0]])
    output_first = float(s_first.sum() + b_first.sum() - d_first.sum())
    return MpcResult(status="optimal", horizon=horizon, s_first=s_first,
                     b_first=b_first, r_first=r_first, r_request=r_request,
                     reserve_up=reserve_up, reserve_dn=reserve_dn,
                     e_traj=e_traj, s_plan=s_plan, b_plan=b_plan,
                     r_plan=r_plan, objective=sol.objective_value * scale,
                     output_first=output_first)
