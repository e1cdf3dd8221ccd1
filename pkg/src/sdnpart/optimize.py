"""Capacity dimensioning, load balancing and failure recovery over a path set.

All three models share the same routing core: one binary per candidate
path (exactly one per flow), one binary per advertisement scenario and
(sub-domain, destination) pair (exactly one per pair), and coupling rows
that only let a path be used when the advertisement in every sub-domain it
crosses sends its entry node to the border it leaves through.

Loads are directional: a link's capacity bounds each direction separately.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import milp
from .lsa import TieError, advertisement_spaces, exit_vector, min_change_representative
from .partition import CostFunction, Partitioning
from .paths import PathTables, Requirement, RoutePath, enumerate_paths, full_sdn_tables, ospf_tables
from .topology import (
    DEFAULT_CATALOG,
    CapacityType,
    DisconnectedError,
    Flow,
    Link,
    Topology,
    link_key,
    validate_catalog,
)

log = logging.getLogger(__name__)

OSPF_MODE = "ospf"
SDNPART_MODE = "sdnpart"
FULL_SDN_MODE = "full-sdn"
MODES = (OSPF_MODE, SDNPART_MODE, FULL_SDN_MODE)

DEFAULT_TE_COST = CostFunction.from_breakpoints((0.5, 0.8, 1.0), (0, 3, 10, 70))
RECOVERY_TE_COST = CostFunction.from_breakpoints((0.8, 1.1, 1.3), (0, 3, 10, 70))


class OptimizationError(RuntimeError):
    pass


class CapacityInfeasibleError(OptimizationError):
    pass


@dataclass(frozen=True)
class AdvertisementEntry:
    subdomain: int
    destination: str
    ospf: tuple[str, ...]
    borders: tuple[str, ...]
    metrics: tuple[int, ...]
    exits: tuple[str, ...]

    def metric_of(self, border: str) -> int:
        return self.metrics[self.borders.index(border)]


@dataclass
class AdvertisementPlan:
    """The advertised metric vector for every (sub-domain, destination) pair."""

    entries: dict[tuple[int, str], AdvertisementEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, key: tuple[int, str]) -> AdvertisementEntry:
        return self.entries[key]

    def previous_metrics(self, ospf_node: str, destination: str) -> dict[str, int] | None:
        """Border-to-metric map advertised for ``destination`` in the sub-domain
        that held ``ospf_node``."""
        for (k, d), e in self.entries.items():
            if d == destination and ospf_node in e.ospf:
                return dict(zip(e.borders, e.metrics))
        return None

    def to_dict(self) -> list[dict]:
        return [
            {
                "subdomain": e.subdomain,
                "destination": e.destination,
                "metrics": dict(zip(e.borders, e.metrics)),
                "exits": dict(zip(e.ospf, e.exits)),
            }
            for _, e in sorted(self.entries.items())
        ]

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def changed_components(old: AdvertisementPlan, new: AdvertisementPlan) -> list[tuple[int, str, str]]:
    """``(k, d, border)`` for every advertised metric of ``new`` that differs
    from what ``old`` advertised there. Sub-domains of ``new`` are matched to
    ``old`` through their OSPF nodes, so split sub-domains compare correctly."""
    out = []
    for (k, d), e in sorted(new.entries.items()):
        prev = old.previous_metrics(e.ospf[0], d)
        for b, m in zip(e.borders, e.metrics):
            if prev is None or prev.get(b) != m:
                out.append((k, d, b))
    return out


@dataclass
class RoutingSolution:
    mode: str
    flows: tuple[Flow, ...]
    paths: dict[tuple[str, str], RoutePath]
    loads: dict[tuple[str, str], float]
    objective: float
    plan: AdvertisementPlan | None = None
    status: milp.Status = milp.Status.OPTIMAL
    gap: float = 0.0

    def path(self, src: str, dst: str) -> RoutePath:
        return self.paths[(src, dst)]

    def utilization(self, capacities: Mapping[tuple[str, str], float]) -> dict[tuple[str, str], float]:
        return {(u, v): load / capacities[link_key(u, v)] for (u, v), load in self.loads.items()}

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "objective": self.objective,
            "status": self.status.value,
            "paths": [
                {"src": s, "dst": d, "nodes": list(p.nodes)} for (s, d), p in sorted(self.paths.items())
            ],
            "loads": [{"from": u, "to": v, "load": x} for (u, v), x in sorted(self.loads.items())],
            "plan": self.plan.to_dict() if self.plan is not None else None,
        }


@dataclass
class CapacityPlan:
    types: dict[tuple[str, str], CapacityType]

    @property
    def total_cost(self) -> float:
        return sum(t.cost for t in self.types.values())

    @property
    def capacities(self) -> dict[tuple[str, str], float]:
        return {k: t.rate for k, t in self.types.items()}

    def to_dict(self) -> dict:
        return {
            "total_cost": self.total_cost,
            "links": [{"a": a, "b": b, "rate": t.rate, "cost": t.cost} for (a, b), t in sorted(self.types.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def directional_loads(topo: Topology, flows: Iterable[Flow], paths: Mapping) -> dict[tuple[str, str], float]:
    loads = {d: 0.0 for link in topo.links for d in link.directions}
    for f in flows:
        for u, v in paths[f.key].links:
            loads[(u, v)] += f.demand
    return loads


def smallest_type(load: float, catalog: Sequence[CapacityType], u_max: float) -> CapacityType:
    for t in catalog:
        if load <= t.rate * u_max + 1e-9:
            return t
    raise CapacityInfeasibleError(f"load {load:g} exceeds {catalog[-1].rate:g} x {u_max:g}")


def ospf_baseline(topo: Topology, flows: Iterable[Flow]) -> RoutingSolution:
    """Every flow on its tie-broken least-cost path over the whole topology."""
    flows = tuple(flows)
    tables = ospf_tables(topo, flows)
    paths = {(p.src, p.dst): p for p in tables.paths}
    return RoutingSolution(OSPF_MODE, flows, paths, directional_loads(topo, flows, paths), 0.0)


# -- shared model core ---------------------------------------------------------


@dataclass
class _Core:
    model: milp.MilpModel
    tables: PathTables
    rho: list[milp.Var]
    phi: dict[tuple[int, str], list[milp.Var]]
    load: dict[tuple[str, str], list[tuple[milp.Var, float]]]


def _routing_core(topo: Topology, tables: PathTables, name: str) -> _Core:
    m = milp.MilpModel(name)
    rho = [m.binary(f"rho[{i}]") for i in range(len(tables.paths))]
    demand = {f.key: f.demand for f in tables.flows}
    for f in tables.flows:
        m.add_constraint({rho[i]: 1.0 for i in tables.by_flow[f.key]}, "==", 1, f"one_path[{f.src},{f.dst}]")
    phi: dict[tuple[int, str], list[milp.Var]] = {}
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, p in enumerate(tables.paths):
        for req in p.requirements:
            key = (req.subdomain, p.dst)
            if key not in phi:
                n = len(tables.spaces[req.subdomain])
                phi[key] = [m.binary(f"phi[{req.subdomain},{p.dst},{v}]") for v in range(n)]
                m.add_constraint({x: 1.0 for x in phi[key]}, "==", 1, f"one_vector[{key[0]},{key[1]}]")
            groups[(p.src, p.dst, req.subdomain, req.entry, req.exit)].append(i)
    for (s, d, k, r, b), members in groups.items():
        terms = [(rho[i], 1.0) for i in members]
        allowed = tables.exits[Requirement(k, r, b)]
        terms += [(phi[(k, d)][v], -1.0) for v in sorted(allowed)]
        m.add_constraint(terms, "<=", 0, f"cons[{s},{d},{k},{r},{b}]")
    load: dict[tuple[str, str], list[tuple[milp.Var, float]]] = {
        d: [] for link in topo.links for d in link.directions
    }
    for i, p in enumerate(tables.paths):
        dm = demand[(p.src, p.dst)]
        if dm > 0:
            for u, v in p.links:
                load[(u, v)].append((rho[i], dm))
    return _Core(m, tables, rho, phi, load)


def _first_scenario(k: int, d: str, space) -> tuple[tuple[int, ...], tuple[str, ...]]:
    return space.vectors[0].metrics, space.exit_ids(0)


def _extract_routing(topo, core: _Core, sol: milp.Solution, mode: str, metrics=None, free=_first_scenario) -> RoutingSolution:
    """Routing and, for the partitioned scheme, the full advertisement plan.

    Pairs no candidate path depends on get their metrics from ``free``.
    """
    tables = core.tables
    paths = {}
    for f in tables.flows:
        idx = max(tables.by_flow[f.key], key=lambda i: sol[core.rho[i]])
        paths[f.key] = tables.paths[idx]
    plan = None
    if mode == SDNPART_MODE:
        plan = AdvertisementPlan()
        for k, space in sorted(tables.spaces.items()):
            for d in topo.node_ids:
                if d in space.ospf:
                    continue
                xs = core.phi.get((k, d))
                if xs is None:
                    vec, exits = free(k, d, space)
                else:
                    v = max(range(len(xs)), key=lambda j: sol[xs[j]])
                    vec = metrics[(k, d)][v] if metrics else space.vectors[v].metrics
                    exits = space.exit_ids(v)
                plan.entries[(k, d)] = AdvertisementEntry(k, d, space.ospf, space.borders, tuple(vec), exits)
    return RoutingSolution(
        mode,
        tables.flows,
        paths,
        directional_loads(topo, tables.flows, paths),
        float(sol.objective),
        plan,
        sol.status,
        sol.gap,
    )


def _start_point(core: _Core, start: RoutingSolution | None):
    """A feasible point of ``core.model`` that routes every flow over the same
    nodes as ``start``, or None when the candidate paths cannot do that."""
    if start is None:
        return None
    tables = core.tables
    pins = {}
    for f in tables.flows:
        old = start.paths.get(f.key)
        if old is None:
            return None
        same = [i for i in tables.by_flow[f.key] if tables.paths[i].nodes == old.nodes]
        if not same:
            return None
        pins.update({core.rho[i]: 0.0 for i in tables.by_flow[f.key] if i not in same})
    sol = milp.solve(core.model.fixed(pins))
    if not sol.has_solution:
        log.info("%s: start routing is not admissible here", core.model.name)
        return None
    return sol.x


def admits(topo: Topology, tables: PathTables, routing: RoutingSolution) -> bool:
    """Whether ``tables`` can route every flow over the nodes ``routing``
    uses, with one consistent advertisement per sub-domain and destination."""
    return _start_point(_routing_core(topo, tables, "admits"), routing) is not None


def _solve(model, backend, time_limit, start=None, node_limit=None) -> milp.Solution:
    if backend != "highs":
        start = None
    sol = milp.solve(model, backend=backend, time_limit=time_limit, node_limit=node_limit, start=start)
    if sol.status is milp.Status.INFEASIBLE:
        raise OptimizationError(f"{model.name} is infeasible")
    if not sol.has_solution:
        raise OptimizationError(f"{model.name}: no solution within limits")
    if sol.status is not milp.Status.OPTIMAL:
        log.warning("%s stopped with gap %.3g", model.name, sol.gap)
    return sol


def routing_tables(
    mode: str,
    topo: Topology,
    flows: Iterable[Flow],
    partitioning: Partitioning | None = None,
    *,
    max_sdn_chain: int | None = None,
    allow_reentry: bool = True,
    hop_slack: int = 3,
    max_paths: int | None = None,
    include: Iterable[PathTables] = (),
) -> PathTables:
    """Candidate paths of a routing scheme."""
    flows = tuple(flows)
    if mode == OSPF_MODE:
        return ospf_tables(topo, flows)
    if mode == FULL_SDN_MODE:
        return full_sdn_tables(topo, flows, hop_slack, max_paths, include)
    if mode == SDNPART_MODE:
        if partitioning is None:
            raise ValueError("sdnpart mode needs a partitioning")
        spaces = advertisement_spaces(topo, partitioning)
        return enumerate_paths(topo, partitioning, spaces, flows, max_sdn_chain, allow_reentry)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def _mode_of(tables: PathTables) -> str:
    return SDNPART_MODE if tables.spaces else FULL_SDN_MODE


# -- capacity dimensioning -----------------------------------------------------


def dimension_capacity(
    topo: Topology,
    tables: PathTables,
    catalog: Sequence[CapacityType] = DEFAULT_CATALOG,
    u_max: float = 0.8,
    *,
    mode: str | None = None,
    backend: str = "highs",
    time_limit: float | None = None,
    node_limit: int | None = None,
    start: RoutingSolution | None = None,
) -> tuple[CapacityPlan, RoutingSolution]:
    """Cheapest per-link capacity types such that some admissible routing keeps
    every direction at or below ``u_max`` of its link's rate.

    ``start`` is a routing to seed the search with, used when every one of
    its paths is a candidate here; the result is then never worse than it.

    Raises:
        CapacityInfeasibleError: no routing fits even the largest type.
    """
    if not 0 < u_max <= 1:
        raise ValueError("u_max must be in (0, 1]")
    catalog = validate_catalog(catalog)
    mode = mode or _mode_of(tables)
    core = _routing_core(topo, tables, f"dimension_{mode}")
    m = core.model
    psi = {}
    for link in topo.links:
        xs = [m.binary(f"psi[{link.a},{link.b},{t.rate:g}]") for t in catalog]
        psi[link.key] = xs
        m.add_constraint({x: 1.0 for x in xs}, "==", 1, f"one_type[{link.a},{link.b}]")
        for u, v in link.directions:
            terms = list(core.load[(u, v)]) + [(x, -t.rate * u_max) for x, t in zip(xs, catalog)]
            m.add_constraint(terms, "<=", 0, f"capacity[{u},{v}]")
    m.minimize([(x, t.cost) for xs in psi.values() for x, t in zip(xs, catalog)])
    try:
        sol = _solve(m, backend, time_limit, _start_point(core, start), node_limit)
    except OptimizationError as exc:
        raise CapacityInfeasibleError(str(exc)) from exc
    routing = _extract_routing(topo, core, sol, mode)
    types = {}
    for key, xs in psi.items():
        types[key] = catalog[max(range(len(xs)), key=lambda j: sol[xs[j]])]
    return CapacityPlan(types), routing


# -- load balancing ------------------------------------------------------------


def _add_te_cost(core: _Core, topo: Topology, capacities: Mapping, costfn: CostFunction) -> list:
    m = core.model
    objective = []
    for link in topo.links:
        cap = float(capacities[link.key])
        if cap <= 0:
            raise ValueError(f"link {link} has no capacity")
        for u, v in link.directions:
            kappa = m.continuous(f"kappa[{u},{v}]", -math.inf if costfn.minimum() < 0 else 0.0)
            objective.append((kappa, 1.0))
            for a, b in costfn.pieces:
                terms = [(kappa, 1.0)] + [(x, -a * dm / cap) for x, dm in core.load[(u, v)]]
                m.add_constraint(terms, ">=", b, f"te[{u},{v},{a:g}]")
    return objective


def balance_load(
    topo: Topology,
    tables: PathTables,
    capacities: Mapping[tuple[str, str], float],
    costfn: CostFunction = DEFAULT_TE_COST,
    *,
    mode: str | None = None,
    backend: str = "highs",
    time_limit: float | None = None,
    node_limit: int | None = None,
    start: RoutingSolution | None = None,
) -> RoutingSolution:
    """Admissible routing minimizing the summed utilization cost of all link
    directions. ``start`` seeds the search as in :func:`dimension_capacity`."""
    mode = mode or _mode_of(tables)
    core = _routing_core(topo, tables, f"balance_{mode}")
    core.model.minimize(_add_te_cost(core, topo, capacities, costfn))
    sol = _solve(core.model, backend, time_limit, _start_point(core, start), node_limit)
    return _extract_routing(topo, core, sol, mode)


def te_cost(sol: RoutingSolution, capacities: Mapping[tuple[str, str], float], costfn: CostFunction) -> float:
    """Utilization cost of a fixed routing."""
    return sum(costfn(load / capacities[link_key(u, v)]) for (u, v), load in sol.loads.items())


# -- failure recovery ----------------------------------------------------------


@dataclass
class RecoveryResult:
    solution: RoutingSolution
    changes: int
    changed: list[tuple[int, str, str]]
    partitioning: Partitioning
    topology: Topology
    tables: PathTables


def recover(
    topo: Topology,
    partitioning: Partitioning,
    flows: Iterable[Flow],
    capacities: Mapping[tuple[str, str], float],
    failed: Link | tuple[str, str],
    previous: RoutingSolution,
    punishment: float,
    costfn: CostFunction = RECOVERY_TE_COST,
    *,
    max_sdn_chain: int | None = None,
    allow_reentry: bool = True,
    backend: str = "highs",
    time_limit: float | None = None,
    node_limit: int | None = None,
    start: RoutingSolution | None = None,
) -> RecoveryResult:
    """Reroute after a single link failure, charging ``punishment`` per
    changed advertised metric relative to ``previous``.

    The failed link is removed, sub-domains that fell apart are split,
    advertisement spaces and paths are rebuilt on the residual topology, and
    each candidate scenario is priced with its representative closest to the
    metrics ``previous`` advertised. ``start`` seeds the search as in
    :func:`dimension_capacity`.

    Raises:
        DisconnectedError: the failure disconnects the topology.
    """
    if punishment < 0:
        raise ValueError("punishment must be >= 0")
    a, b = failed.key if isinstance(failed, Link) else link_key(*failed)
    if not topo.has_link(a, b):
        raise ValueError(f"no link {a}-{b}")
    residual = topo.without_link(a, b)
    if not residual.is_connected():
        raise DisconnectedError(f"failure of {a}-{b} disconnects the topology")
    flows = tuple(flows)
    newp = partitioning.restricted_to(residual)
    tables = routing_tables(
        SDNPART_MODE, residual, flows, newp, max_sdn_chain=max_sdn_chain, allow_reentry=allow_reentry
    )
    old_plan = previous.plan or AdvertisementPlan()
    core = _routing_core(residual, tables, "recover")
    objective = _add_te_cost(core, residual, capacities, costfn)
    def prev_of(space, d):
        prev_map = old_plan.previous_metrics(space.ospf[0], d)
        return None if prev_map is None else tuple(prev_map.get(bd, -1) for bd in space.borders)

    def keep_if_possible(k, d, space):
        # nothing routes by this advertisement: keep it unless it now ties
        prev = prev_of(space, d)
        if prev is not None and min(prev) >= 0:
            try:
                exits = exit_vector(space.distances, prev)
                return prev, tuple(space.borders[e] for e in exits)
            except TieError:
                pass
        best = None
        for v, vec in enumerate(space.vectors):
            rep = min_change_representative(space.distances, vec.exits, prev)
            n = len(rep) if prev is None else sum(x != y for x, y in zip(rep, prev))
            if best is None or n < best[0]:
                best = (n, rep, space.exit_ids(v))
        return best[1], best[2]

    metrics: dict[tuple[int, str], list[tuple[int, ...]]] = {}
    for (k, d), xs in core.phi.items():
        space = tables.spaces[k]
        prev = prev_of(space, d)
        reps = []
        for v, vec in enumerate(space.vectors):
            rep = min_change_representative(space.distances, vec.exits, prev)
            changes = len(rep) if prev is None else sum(x != y for x, y in zip(rep, prev))
            reps.append(rep)
            if changes and punishment:
                objective.append((xs[v], punishment * changes))
        metrics[(k, d)] = reps
    core.model.minimize(objective)
    sol = _solve(core.model, backend, time_limit, _start_point(core, start), node_limit)
    routing = _extract_routing(residual, core, sol, SDNPART_MODE, metrics, keep_if_possible)
    changed = changed_components(old_plan, routing.plan)
    return RecoveryResult(routing, len(changed), changed, newp, residual, tables)


def reconfiguration_events(
    mode: str,
    topo: Topology,
    partitioning: Partitioning | None = None,
    failed: Link | tuple[str, str] | None = None,
    old_plan: AdvertisementPlan | None = None,
    new_plan: AdvertisementPlan | None = None,
) -> int:
    """Routing recomputations in OSPF routers caused by one link failure.

    OSPF: both endpoints flood a failure LSA to every router. Full SDN: none.
    Partitioned: failure LSAs stay inside the sub-domain owning the link
    (none when both endpoints are borders), and every changed advertised
    metric floods one LSA through its sub-domain.
    """
    if mode == OSPF_MODE:
        return 2 * len(topo)
    if mode == FULL_SDN_MODE:
        return 0
    if mode != SDNPART_MODE:
        raise ValueError(f"unknown mode {mode!r}")
    if partitioning is None or failed is None:
        raise ValueError("partitioned mode needs the partitioning and the failed link")
    a, b = failed.key if isinstance(failed, Link) else link_key(*failed)
    sd = partitioning.subdomain_of(a) or partitioning.subdomain_of(b)
    events = 2 * sd.alpha if sd is not None else 0
    if old_plan is not None and new_plan is not None:
        for k, d, _ in changed_components(old_plan, new_plan):
            events += len(new_plan[(k, d)].ospf)
    return events


def loss_and_congestion(
    sol: RoutingSolution, capacities: Mapping[tuple[str, str], float]
) -> dict[str, float]:
    """Share of offered traffic above capacity, and share of overloaded link
    directions."""
    total = sum(f.demand for f in sol.flows)
    excess = 0.0
    congested = 0
    for (u, v), load in sol.loads.items():
        cap = capacities[link_key(u, v)]
        if load > cap + 1e-9:
            excess += load - cap
            congested += 1
    return {
        "loss_ratio": excess / total if total > 0 else 0.0,
        "congested_fraction": congested / len(sol.loads) if sol.loads else 0.0,
    }
