"""Day-level orchestration: periodic re-clustering, the per-step two-layer
control loop, logging, and file reports.

The outer loop is strictly sequential in k (closed loop).  Within one step the
cluster controllers are independent of each other, so solving them in cluster
order is equivalent to solving them concurrently; coordination rounds are
synchronous.  Every CSV formats floats with fmt_float() so identical runs produce
byte-identical files; wall-clock timings go to JSON and the text summary only.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .mpc import (ClusterModel, horizon_length, persistence_forecast,
                  solve_local_mpc)
from .network import (Scenario, ScenarioError, compute_variation_bounds,
                      fmt_float, generate_actuals, with_actuals)
from .optkernel import SolverError
from .partition import Partition, dump_partition_csv, partition_kway
from .paths import PathTable, all_pairs_source_sink
from .supervisor import (CommGraph, DcadmmResult, SupervisorProblem,
                         comm_complete, comm_from_file, comm_ring,
                         dump_trace_csv, run_dcadmm)
from .transactions import (TransactionPlan, full_edge_weights,
                           project_transactions, solve_transactions)

DEFAULT_NETWORK_TOLERANCE = 1e-2  # MW, bound on |sum_h y_h(k)|


@dataclass
class SimulationConfig:
    """Knobs honored by planning and the control loop; defaults match the CLI."""

    comm: str = "complete"  # complete | ring | file:<path>
    seed: int | None = None  # synthesizes missing D_actual when set
    gamma_source: float = 1.0
    gamma_battery: float = 1.0
    gamma_request: float = 1e6
    eps_r: float = 1e-3
    cs_mult: float = 10.0
    balance_tol: float = 1.3
    penalty: float = 1.0
    admm_tol: float = 1e-6
    admm_max_iter: int = 500


def resolve_comm(spec: str, m: int) -> CommGraph:
    if spec == "complete":
        return comm_complete(m)
    if spec == "ring":
        return comm_ring(m)
    if spec.startswith("file:"):
        return comm_from_file(spec[len("file:"):], m)
    raise ScenarioError(f"unknown communication graph '{spec}' "
                        f"(expected complete, ring, or file:<path>)")


# ---------------------------------------------------------------------------
# period planning


@dataclass
class PeriodPlan:
    """Clustering artifacts for one period: transactions, weights, partition,
    and one controller model per cluster."""

    eta: int
    steps: range
    table: PathTable
    plan: TransactionPlan
    edge_weights: dict[tuple[int, int], float]
    partition: Partition
    models: dict[int, ClusterModel]


def _build_models(scenario: Scenario, partition: Partition, eta: int,
                  config: SimulationConfig) -> dict[int, ClusterModel]:
    _, units, timeline = scenario
    steps = timeline.period_steps(eta)
    sl = slice(steps.start, steps.stop)
    n_steps = len(steps)
    bounds = compute_variation_bounds(timeline)

    def _stack(table, nodes):
        return np.array([table[v][sl] for v in nodes]).reshape(len(nodes), n_steps)

    models: dict[int, ClusterModel] = {}
    for label, sets in enumerate(partition.unit_sets(units), start=1):
        src, bat, snk = sets["sources"], sets["storages"], sets["sinks"]
        models[label] = ClusterModel(
            cluster_id=label,
            source_nodes=src, battery_nodes=bat, sink_nodes=snk,
            s_dn=_stack(bounds.s_dn, src), s_up=_stack(bounds.s_up, src),
            b_dn=_stack({v: timeline.storage[v].b_dn for v in bat}, bat),
            b_up=_stack({v: timeline.storage[v].b_up for v in bat}, bat),
            e_dn=_stack({v: timeline.storage[v].e_dn for v in bat}, bat),
            e_up=_stack({v: timeline.storage[v].e_up for v in bat}, bat),
            e_ref=np.zeros(len(bat)),  # anchored to measured energy at runtime
            tau_hours=timeline.tau_hours, n_p=timeline.n_p, n_c=timeline.n_c,
            gamma_source=config.gamma_source, gamma_battery=config.gamma_battery,
            gamma_request=config.gamma_request, request_threshold=config.eps_r)
    return models


def plan_period(scenario: Scenario, eta: int,
                config: SimulationConfig | None = None,
                table: PathTable | None = None) -> PeriodPlan:
    """Clustering pipeline for one period: variation bounds -> shortest paths
    -> envelope transactions -> edge projection -> balanced min-cut."""
    config = config or SimulationConfig()
    graph, units, timeline = scenario
    steps = timeline.period_steps(eta)
    if table is None:
        table = all_pairs_source_sink(graph, units)
    bounds = compute_variation_bounds(timeline)
    plan = solve_transactions(bounds, table, steps, cs_mult=config.cs_mult)
    weights = full_edge_weights(project_transactions(plan, table), graph)
    partition = partition_kway(graph, weights, timeline.m,
                               balance_tol=config.balance_tol)
    models = _build_models(scenario, partition, eta, config)
    return PeriodPlan(eta=eta, steps=steps, table=table, plan=plan,
                      edge_weights=weights, partition=partition, models=models)


# ---------------------------------------------------------------------------
# control log


@dataclass
class ClusterStep:
    """One cluster's applied decisions and measurements at one step."""

    s: dict[int, float]  # source power deviation, by node
    b: dict[int, float]  # battery power deviation, by node
    e: dict[int, float]  # stored-energy deviation at step start, by node
    d: dict[int, float]  # measured sink deviation, by node
    y: float  # output deviation sum(s) + sum(b) - sum(d)
    r_star: float
    r_request: float  # thresholded request sent upward
    reserve_up: float
    reserve_dn: float
    dy_applied: float  # commitment honored at this step (computed at k-1)
    dy_committed: float = 0.0  # commitment computed at this step (for k+1)


@dataclass
class StepRecord:
    k: int
    period: int
    clusters: dict[int, ClusterStep]


@dataclass
class ActivationRecord:
    k: int
    requests: dict[int, float]
    commitments: dict[int, float]
    q_requested: float
    q_used: float
    shortfall: bool
    n_iterations: int
    converged: bool
    consensus_residual: float
    coupling_residual: float
    result: DcadmmResult = field(repr=False)


@dataclass
class ControlLog:
    m: int
    steps: list[StepRecord]
    activations: list[ActivationRecord]
    plans: list[PeriodPlan]
    timings: dict

    def network_deviation(self) -> np.ndarray:
        """sum_h y_h(k) for every step, in step order."""
        return np.array([
            float(np.sum([rec.clusters[c].y for c in sorted(rec.clusters)]))
            for rec in self.steps])

    def verify(self) -> None:
        """Recompute each y from the logged unit values; must match exactly."""
        ks = [rec.k for rec in self.steps]
        if ks != list(range(len(ks))):
            raise ValueError("control log steps do not tile the day")
        for rec in self.steps:
            for c, cs in rec.clusters.items():
                s = np.array([cs.s[v] for v in sorted(cs.s)])
                b = np.array([cs.b[v] for v in sorted(cs.b)])
                d = np.array([cs.d[v] for v in sorted(cs.d)])
                y = float(s.sum() + b.sum() - d.sum())
                if y != cs.y:
                    raise ValueError(
                        f"step {rec.k} cluster {c}: logged output {cs.y!r} "
                        f"!= recomputed {y!r}")


# ---------------------------------------------------------------------------
# the two-layer loop


def run_simulation(scenario: Scenario,
                   config: SimulationConfig | None = None) -> ControlLog:
    """Closed-loop day: per-period clustering, then per step the local
    controllers followed (when any request is nonzero) by one coordination
    round whose commitments apply from the next step on.

    Commitments never cross a period boundary: cluster composition changes
    there, so pending deltas are dropped and each period starts balanced.
    """
    config = config or SimulationConfig()
    graph, units, timeline = scenario
    if timeline.d_actual is None:
        if config.seed is None:
            raise ScenarioError(
                "scenario has no D_actual profiles; provide them or set a seed")
        scenario = with_actuals(scenario,
                                generate_actuals(timeline, config.seed))
        timeline = scenario.timeline
    comm = resolve_comm(config.comm, timeline.m)
    table = all_pairs_source_sink(graph, units)

    d_dev = {j: timeline.d_actual[j] - timeline.d_nom[j] for j in units.sinks}
    e_state = {v: timeline.storage[v].e0 for v in units.storages}

    t0 = time.perf_counter()
    plans: list[PeriodPlan] = []
    steps_log: list[StepRecord] = []
    activations: list[ActivationRecord] = []
    plan_seconds: list[float] = []
    max_step_seconds = 0.0

    for eta in range(1, timeline.n_periods + 1):
        tp = time.perf_counter()
        plan = plan_period(scenario, eta, config, table=table)
        plan_seconds.append(time.perf_counter() - tp)
        plans.append(plan)
        # anchor every battery's terminal target to its period-start energy
        models = {
            c: replace(model, e_ref=np.array(
                [e_state[v] for v in model.battery_nodes]))
            for c, model in plan.models.items()}
        order = sorted(models)
        dy_prev = {c: 0.0 for c in order}

        for k in plan.steps:
            ts = time.perf_counter()
            kl = k - plan.steps.start
            cluster_steps: dict[int, ClusterStep] = {}
            requests: dict[int, float] = {}
            for c in order:
                model = models[c]
                d_meas = np.array([d_dev[j][k] for j in model.sink_nodes])
                e_cur = np.array([e_state[v] for v in model.battery_nodes])
                forecast = persistence_forecast(d_meas,
                                                horizon_length(model, kl))
                try:
                    res = solve_local_mpc(model, kl, forecast, dy_prev[c],
                                          e_cur)
                except SolverError as exc:
                    raise type(exc)(
                        f"step {k} cluster {c}: {exc}") from exc
                cluster_steps[c] = ClusterStep(
                    s=dict(zip(model.source_nodes, res.s_first.tolist())),
                    b=dict(zip(model.battery_nodes, res.b_first.tolist())),
                    e=dict(zip(model.battery_nodes, e_cur.tolist())),
                    d=dict(zip(model.sink_nodes, d_meas.tolist())),
                    y=res.output_first, r_star=res.r_first,
                    r_request=res.r_request, reserve_up=res.reserve_up,
                    reserve_dn=res.reserve_dn, dy_applied=dy_prev[c])
                requests[c] = res.r_request
            # batteries integrate the applied first-step decisions
            for c in order:
                for v, bval in cluster_steps[c].b.items():
                    e_state[v] -= timeline.tau_hours * bval

            dy_next = {c: 0.0 for c in order}
            if any(requests[c] != 0.0 for c in order):
                problem = SupervisorProblem(
                    requests=np.array([requests[c] for c in order]),
                    box_dn=np.array(
                        [cluster_steps[c].reserve_dn for c in order]),
                    box_up=np.array(
                        [cluster_steps[c].reserve_up for c in order]))
                q_requested = problem.q
                q_used, shortfall = problem.clip_q()
                admm = run_dcadmm(problem, comm, penalty=config.penalty,
                                  tol=config.admm_tol,
                                  max_iter=config.admm_max_iter, q=q_used)
                for idx, c in enumerate(order):
                    dy_next[c] = float(admm.dy[idx])
                    cluster_steps[c].dy_committed = dy_next[c]
                activations.append(ActivationRecord(
                    k=k, requests={c: requests[c] for c in order},
                    commitments={c: dy_next[c] for c in order},
                    q_requested=q_requested, q_used=q_used,
                    shortfall=shortfall, n_iterations=admm.n_iterations,
                    converged=admm.converged,
                    consensus_residual=admm.consensus_residual,
                    coupling_residual=admm.coupling_residual, result=admm))

            steps_log.append(StepRecord(k=k, period=eta,
                                        clusters=cluster_steps))
            dy_prev = dy_next
            max_step_seconds = max(max_step_seconds,
                                   time.perf_counter() - ts)

    timings = {
        "wall_clock_seconds": time.perf_counter() - t0,
        "plan_seconds": plan_seconds,
        "max_step_seconds": max_step_seconds,
        "n_steps": len(steps_log),
    }
    return ControlLog(m=timeline.m, steps=steps_log, activations=activations,
                      plans=plans, timings=timings)


# ---------------------------------------------------------------------------
# persistence

_CLUSTER_KINDS = ("y", "r_star", "r_req", "ds_up", "ds_dn", "dy",
                  "dy_applied")


def dump_control_log(log: ControlLog, path: str | Path) -> None:
    """Long-format CSV: node-level rows (s, b, e, d) then cluster-level rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "period", "cluster", "kind", "node", "value"])
        for rec in log.steps:
            for c in sorted(rec.clusters):
                cs = rec.clusters[c]
                for kind, table in (("s", cs.s), ("b", cs.b), ("e", cs.e),
                                    ("d", cs.d)):
                    for node in sorted(table):
                        writer.writerow([rec.k, rec.period, c, kind, node,
                                         fmt_float(table[node])])
                values = (cs.y, cs.r_star, cs.r_request, cs.reserve_up,
                          cs.reserve_dn, cs.dy_committed, cs.dy_applied)
                for kind, val in zip(_CLUSTER_KINDS, values):
                    writer.writerow([rec.k, rec.period, c, kind, "",
                                     fmt_float(val)])


def load_control_log(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["k", "period", "cluster", "kind", "node",
                                 "value"]:
            raise ScenarioError(f"{path}: unexpected control log header")
        for row in reader:
            rows.append({
                "k": int(row["k"]), "period": int(row["period"]),
                "cluster": int(row["cluster"]), "kind": row["kind"],
                "node": int(row["node"]) if row["node"] else None,
                "value": float(row["value"])})
    return rows


def dump_activations_csv(log: ControlLog, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "q_requested", "q_used", "shortfall",
                         "n_iterations", "converged", "consensus_residual",
                         "coupling_residual"])
        for act in log.activations:
            writer.writerow([act.k, fmt_float(act.q_requested), fmt_float(act.q_used),
                             int(act.shortfall), act.n_iterations,
                             int(act.converged), fmt_float(act.consensus_residual),
                             fmt_float(act.coupling_residual)])


def simulate_to_dir(scenario: Scenario, config: SimulationConfig | None,
                    out_dir: str | Path) -> ControlLog:
    """Run the day and persist the raw artifacts into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = run_simulation(scenario, config)
    dump_control_log(log, out / "control_log.csv")
    dump_activations_csv(log, out / "activations.csv")
    for plan in log.plans:
        dump_partition_csv(plan.partition, out / f"partition_{plan.eta}.csv")
    for act in log.activations:
        dump_trace_csv(act.result, out / f"dcadmm_{act.k}.csv")
    (out / "timings.json").write_text(json.dumps(log.timings, indent=2))
    return log


# ---------------------------------------------------------------------------
# reporting


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def report(log_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Turn the raw log directory into the plot-ready data products."""
    src = Path(log_dir)
    out = Path(out_dir) if out_dir is not None else src
    out.mkdir(parents=True, exist_ok=True)
    rows = load_control_log(src / "control_log.csv")

    clusters = sorted({r["cluster"] for r in rows})
    ks = sorted({r["k"] for r in rows})
    y = {(r["k"], r["cluster"]): r["value"] for r in rows if r["kind"] == "y"}
    r_req = {(r["k"], r["cluster"]): r["value"]
             for r in rows if r["kind"] == "r_req"}
    dy = {(r["k"], r["cluster"]): r["value"] for r in rows if r["kind"] == "dy"}

    paths = []
    p = out / "cluster_output_deviation.csv"
    _write_csv(p, ["k"] + [f"y_{c}" for c in clusters],
               [[k] + [fmt_float(y[(k, c)]) for c in clusters] for k in ks])
    paths.append(p)

    p = out / "network_total_deviation.csv"
    totals = {k: float(np.sum([y[(k, c)] for c in clusters])) for k in ks}
    _write_csv(p, ["k", "total"], [[k, fmt_float(totals[k])] for k in ks])
    paths.append(p)

    p = out / "requests_and_commitments.csv"
    active_ks = [k for k in ks
                 if any(r_req[(k, c)] != 0.0 for c in clusters)]
    _write_csv(p, ["k", "cluster", "request", "commitment"],
               [[k, c, fmt_float(r_req[(k, c)]), fmt_float(dy[(k, c)])]
                for k in active_ks for c in clusters])
    paths.append(p)

    p = out / "unit_dispatch.csv"
    kind_name = {"s": "source", "b": "battery", "d": "sink"}
    dispatch = [[r["k"], r["node"], kind_name[r["kind"]], fmt_float(r["value"])]
                for r in rows if r["kind"] in kind_name]
    _write_csv(p, ["k", "node", "kind", "value"], dispatch)
    paths.append(p)

    lines = [f"max_abs_network_deviation={fmt_float(max(abs(v) for v in totals.values()) if totals else 0.0)}"]
    act_path = src / "activations.csv"
    if act_path.exists():
        with open(act_path, newline="") as fh:
            acts = list(csv.DictReader(fh))
        iters = [int(a["n_iterations"]) for a in acts]
        lines = [
            f"activations={len(acts)}",
            f"dcadmm_iterations_min={min(iters) if iters else 0}",
            f"dcadmm_iterations_avg={fmt_float(float(np.mean(iters)) if iters else 0.0)}",
            f"dcadmm_iterations_max={max(iters) if iters else 0}",
            f"nonconverged_activations={sum(1 for a in acts if a['converged'] == '0')}",
            f"shortfall_steps={sum(1 for a in acts if a['shortfall'] == '1')}",
        ] + lines
    timing_path = src / "timings.json"
    if timing_path.exists():
        timings = json.loads(timing_path.read_text())
        lines.append(
            f"wall_clock_seconds={fmt_float(float(timings['wall_clock_seconds']))}")
        lines.append(
            f"plan_seconds_total={fmt_float(float(np.sum(timings['plan_seconds'])))}")
        lines.append(
            f"max_step_seconds={fmt_float(float(timings['max_step_seconds']))}")
    p = out / "summary.txt"
    p.write_text("\n".join(lines) + "\n")
    paths.append(p)
    return paths
