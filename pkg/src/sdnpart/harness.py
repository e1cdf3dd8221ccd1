"""Experiment pipeline: demands, capacities, per-scheme runs and reports.

Schemes are plain OSPF, the partitioned scheme for every configured K, and
full SDN. Each run dimensions capacities, balances load on the OSPF
capacities, and sweeps every single-link failure. Results go to CSV files
with fixed decimal formatting, so a fixed seed gives byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .lsa import advertisement_spaces
from .optimize import (
    FULL_SDN_MODE,
    OSPF_MODE,
    SDNPART_MODE,
    CapacityPlan,
    RoutingSolution,
    balance_load,
    dimension_capacity,
    loss_and_congestion,
    ospf_baseline,
    reconfiguration_events,
    recover,
    routing_tables,
    smallest_type,
)
from .partition import CostFunction, Partitioning, partition
from .paths import enumerate_paths
from .topology import DEFAULT_CATALOG, CapacityType, Flow, Link, Topology, load_topology, validate_catalog

log = logging.getLogger(__name__)

TE_SLOPES = (0, 3, 10, 70)


class ExperimentError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str = "abilene"
    ks: tuple[int, ...] = (2,)
    max_borders: int = 4
    seed: int = 0
    u_max: float = 0.8
    target_load: float = 80.0
    catalog: tuple[CapacityType, ...] = DEFAULT_CATALOG
    te_knees: tuple[float, float, float] = (0.5, 0.8, 1.0)
    recovery_knees: tuple[float, float, float] = (0.8, 1.1, 1.3)
    bucket_width: float = 0.1
    punishment: float = 1.0
    hop_slack: int = 3
    node_limit: int | None = 5000
    failures: bool = True
    parallel: bool = False

    @property
    def te_cost(self) -> CostFunction:
        return CostFunction.from_breakpoints(self.te_knees, TE_SLOPES)

    @property
    def recovery_cost(self) -> CostFunction:
        return CostFunction.from_breakpoints(self.recovery_knees, TE_SLOPES)


@dataclass
class FailureStats:
    loss_ratio: float
    congested_fraction: float
    reconfigurations: float


@dataclass
class Report:
    schemes: list[str]
    capacity_cost: dict[str, float]
    histograms: dict[str, list[tuple[float, float]]]
    failures: dict[str, FailureStats] = field(default_factory=dict)
    skipped_failures: list[tuple[str, str]] = field(default_factory=list)

    def capacity_ratio(self, scheme: str) -> float:
        return self.capacity_cost[scheme] / self.capacity_cost[OSPF_MODE]


def generate_demands(topo: Topology, seed: int, target: float = 80.0) -> list[Flow]:
    """One flow per ordered node pair, uniform on (0, 1], rescaled so the
    busiest link direction under OSPF carries ``target``."""
    ids = sorted(topo.node_ids)
    pairs = [(s, d) for s in ids for d in ids if s != d]
    rng = np.random.default_rng(seed)
    raw = 1.0 - rng.random(len(pairs))
    flows = [Flow(s, d, float(x)) for (s, d), x in zip(pairs, raw)]
    peak = max(ospf_baseline(topo, flows).loads.values())
    scale = target / peak
    return [Flow(f.src, f.dst, f.demand * scale) for f in flows]


def assign_ospf_capacities(
    topo: Topology, flows: Sequence[Flow], u_max: float = 0.8, catalog: Sequence[CapacityType] = DEFAULT_CATALOG
) -> CapacityPlan:
    """Smallest type per link keeping both directions of its OSPF load within
    ``u_max`` of the rate."""
    catalog = validate_catalog(catalog)
    loads = ospf_baseline(topo, flows).loads
    return CapacityPlan(
        {link.key: smallest_type(max(loads[d] for d in link.directions), catalog, u_max) for link in topo.links}
    )


def utilization_histogram(
    solution: RoutingSolution, capacities, width: float = 0.1
) -> list[tuple[float, float]]:
    """Share of link directions per utilization bucket; the last bucket
    collects everything at or above 1."""
    n = int(round(1 / width))
    counts = [0] * (n + 1)
    util = solution.utilization(capacities)
    for u in util.values():
        counts[min(int(math.floor(u / width + 1e-9)), n)] += 1
    total = len(util)
    return [(round(i * width, 10), c / total) for i, c in enumerate(counts)]


def scheme_name(mode: str, k: int | None = None) -> str:
    return f"{mode}-k{k}" if mode == SDNPART_MODE else mode


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(name, exc) from exc


@dataclass
class _SweepTask:
    topo: Topology
    flows: tuple[Flow, ...]
    capacities: dict
    link: Link
    config: ExperimentConfig
    partitionings: dict[int, Partitioning]
    previous: dict[str, RoutingSolution]


def _sweep_one(task: _SweepTask) -> dict[str, tuple[float, float, float]]:
    """Loss, congestion and reconfiguration count per scheme for one failure."""
    cfg = task.config
    residual = task.topo.without_link(task.link.a, task.link.b)
    out = {}
    sol = ospf_baseline(residual, task.flows)
    m = loss_and_congestion(sol, task.capacities)
    out[OSPF_MODE] = (m["loss_ratio"], m["congested_fraction"], reconfiguration_events(OSPF_MODE, task.topo))
    for k, p in task.partitionings.items():
        name = scheme_name(SDNPART_MODE, k)
        prev = task.previous[name]
        res = recover(
            task.topo, p, task.flows, task.capacities, task.link, prev, cfg.punishment, cfg.recovery_cost,
            node_limit=cfg.node_limit,
        )
        m = loss_and_congestion(res.solution, task.capacities)
        events = reconfiguration_events(SDNPART_MODE, task.topo, p, task.link, prev.plan, res.solution.plan)
        out[name] = (m["loss_ratio"], m["congested_fraction"], events)
    tables = routing_tables(FULL_SDN_MODE, residual, task.flows, hop_slack=cfg.hop_slack)
    sol = balance_load(residual, tables, task.capacities, cfg.recovery_cost, node_limit=cfg.node_limit)
    m = loss_and_congestion(sol, task.capacities)
    out[FULL_SDN_MODE] = (m["loss_ratio"], m["congested_fraction"], 0)
    return out


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> Report:
    """Run every scheme on one topology and, with ``out_dir``, write the report files."""
    cfg = config
    topo = _stage("load", load_topology, cfg.topology)
    flows = tuple(_stage("demands", generate_demands, topo, cfg.seed, cfg.target_load))
    ospf_plan = _stage("ospf capacities", assign_ospf_capacities, topo, flows, cfg.u_max, cfg.catalog)
    caps = ospf_plan.capacities
    base = ospf_baseline(topo, flows)

    schemes = [OSPF_MODE]
    cost = {OSPF_MODE: ospf_plan.total_cost}
    hist = {OSPF_MODE: utilization_histogram(base, caps, cfg.bucket_width)}
    artifacts: dict[str, str] = {"capacity_ospf.json": ospf_plan.to_json()}
    partitionings: dict[int, Partitioning] = {}
    balanced: dict[str, RoutingSolution] = {}
    all_tables = []
    best_dim, best_bal = base, base
    for k in cfg.ks:
        name = scheme_name(SDNPART_MODE, k)
        p = _stage(f"partition K={k}", partition, topo, k, cfg.max_borders)
        partitionings[k] = p
        spaces = _stage(f"advertisements K={k}", advertisement_spaces, topo, p, cfg.parallel)
        tables = _stage(f"paths K={k}", enumerate_paths, topo, p, spaces, flows)
        all_tables.append(tables)
        plan, routing = _stage(
            f"dimension {name}", dimension_capacity, topo, tables, cfg.catalog, cfg.u_max,
            node_limit=cfg.node_limit, start=base,
        )
        sol = _stage(
            f"balance {name}", balance_load, topo, tables, caps, cfg.te_cost, node_limit=cfg.node_limit, start=base
        )
        schemes.append(name)
        cost[name] = plan.total_cost
        hist[name] = utilization_histogram(sol, caps, cfg.bucket_width)
        balanced[name] = sol
        if plan.total_cost <= min(cost[s] for s in schemes[1:]):
            best_dim = routing
        if sol.objective <= min(balanced[s].objective for s in balanced):
            best_bal = sol
        artifacts[f"partition_k{k}.json"] = p.to_json()
        artifacts[f"advertisements_k{k}.json"] = json.dumps([spaces[i].to_dict() for i in sorted(spaces)], indent=2)
        artifacts[f"capacity_{name}.json"] = plan.to_json()
        artifacts[f"plan_{name}.json"] = sol.plan.to_json()

    full = _stage(
        "paths full-sdn", routing_tables, FULL_SDN_MODE, topo, flows, hop_slack=cfg.hop_slack, include=all_tables
    )
    plan, _ = _stage(
        "dimension full-sdn", dimension_capacity, topo, full, cfg.catalog, cfg.u_max,
        node_limit=cfg.node_limit, start=best_dim,
    )
    sol = _stage(
        "balance full-sdn", balance_load, topo, full, caps, cfg.te_cost, node_limit=cfg.node_limit, start=best_bal
    )
    schemes.append(FULL_SDN_MODE)
    cost[FULL_SDN_MODE] = plan.total_cost
    hist[FULL_SDN_MODE] = utilization_histogram(sol, caps, cfg.bucket_width)
    artifacts["capacity_full-sdn.json"] = plan.to_json()

    report = Report(schemes, cost, hist)
    if cfg.failures:
        _stage("failure sweep", _failure_sweep, report, topo, flows, caps, cfg, partitionings, balanced)
    if out_dir is not None:
        write_report(report, out_dir, artifacts, cfg)
    return report


def _failure_sweep(report, topo, flows, caps, cfg, partitionings, balanced) -> None:
    tasks = []
    for link in topo.links:
        if topo.without_link(link.a, link.b).is_connected():
            tasks.append(_SweepTask(topo, flows, caps, link, cfg, partitionings, balanced))
        else:
            report.skipped_failures.append(link.key)
    if cfg.parallel and len(tasks) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    for name in report.schemes:
        rows = [r[name] for r in results]
        if not rows:
            report.failures[name] = FailureStats(0.0, 0.0, 0.0)
            continue
        report.failures[name] = FailureStats(*(sum(col) / len(rows) for col in zip(*rows)))


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_report(report: Report, out_dir: str, artifacts: dict[str, str] | None = None, config=None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "capacity.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "total_cost", "ratio"])
        for s in report.schemes:
            w.writerow([s, _fmt(report.capacity_cost[s]), _fmt(report.capacity_ratio(s))])
    for s in report.schemes:
        with open(os.path.join(out_dir, f"histogram_{s}.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bucket_low", "frequency"])
            for low, freq in report.histograms[s]:
                w.writerow([_fmt(low), _fmt(freq)])
    if report.failures:
        with open(os.path.join(out_dir, "failures.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "loss_permille", "congested_pct", "reconfigs"])
            for s in report.schemes:
                f = report.failures[s]
                w.writerow([s, _fmt(1000 * f.loss_ratio), _fmt(100 * f.congested_fraction), _fmt(f.reconfigurations)])
    summary = {
        "schemes": report.schemes,
        "capacity_cost": report.capacity_cost,
        "skipped_failures": [list(k) for k in report.skipped_failures],
    }
    if config is not None:
        # parallelism does not change results, so it is left out to keep the file identical
        summary["config"] = {k: v for k, v in asdict(config).items() if k not in ("catalog", "parallel")}
        summary["config"]["catalog"] = [[t.rate, t.cost] for t in config.catalog]
    artifacts = dict(artifacts or {})
    artifacts["report.json"] = json.dumps(summary, indent=2, sort_keys=True)
    for name, text in artifacts.items():
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text + "\n")
