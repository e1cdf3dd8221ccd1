"""Admissible routing paths and the boolean tables the optimization models use.

A path alternates OSPF segments and SDN links. An OSPF segment starts at
an OSPF node and follows the least-cost route inside its sub-domain: to a
border when the destination lies outside the sub-domain, or straight to the
destination when it is one of the sub-domain's OSPF nodes. Border nodes
forward each flow freely, so after a border the path may take any link,
including further border links.

Only OSPF segments that leave through a border depend on the advertised
metrics. Each such segment yields a requirement ``(k, r, b)``: under the
metric vector advertised in sub-domain ``k`` for the path's destination,
entry node ``r`` must exit through ``b``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .lsa import SubdomainAdvertisementSpace, TieError, exit_vector
from .partition import Partitioning
from .topology import Flow, Topology, TopologyError, least_cost_path, shortest_path_tree

log = logging.getLogger(__name__)

OSPF = "ospf"
SDN = "sdn"


class NoPathError(TopologyError):
    """Some flow has no admissible path."""

    def __init__(self, flows: Sequence[tuple[str, str]]):
        shown = ", ".join(f"{s}->{d}" for s, d in flows[:5])
        more = f" and {len(flows) - 5} more" if len(flows) > 5 else ""
        super().__init__(f"no admissible path for {shown}{more}")
        self.flows = list(flows)


@dataclass(frozen=True)
class Segment:
    kind: str
    nodes: tuple[str, ...]
    subdomain: int | None = None


@dataclass(frozen=True)
class Requirement:
    """Entry node ``entry`` of sub-domain ``subdomain`` must exit via ``exit``."""

    subdomain: int
    entry: str
    exit: str


@dataclass(frozen=True)
class RoutePath:
    src: str
    dst: str
    nodes: tuple[str, ...]
    segments: tuple[Segment, ...] = ()
    requirements: tuple[Requirement, ...] = ()

    @property
    def links(self) -> tuple[tuple[str, str], ...]:
        """Traversed links as directed ``(from, to)`` pairs."""
        return tuple(zip(self.nodes, self.nodes[1:]))

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    def traverses(self, u: str, v: str) -> bool:
        """``tr``: whether the path uses link ``u-v`` in either direction."""
        return any({a, b} == {u, v} for a, b in self.links)

    def requirements_in(self, k: int) -> tuple[Requirement, ...]:
        return tuple(req for req in self.requirements if req.subdomain == k)

    def __str__(self) -> str:
        if not self.segments:
            return "-".join(self.nodes)
        parts = []
        for seg in self.segments:
            text = "-".join(seg.nodes)
            parts.append(f"[{text}]" if seg.kind == OSPF else f"<{text}>")
        return " ".join(parts)


@dataclass
class PathTables:
    """The path set and its ``cr``/``dst``/``tr``/``cons`` relations."""

    flows: tuple[Flow, ...]
    paths: tuple[RoutePath, ...]
    spaces: Mapping[int, SubdomainAdvertisementSpace] = field(default_factory=dict)
    by_flow: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    exits: dict[Requirement, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.by_flow:
            for i, p in enumerate(self.paths):
                self.by_flow.setdefault((p.src, p.dst), []).append(i)
        for p in self.paths:
            for req in p.requirements:
                if req not in self.exits:
                    space = self.spaces[req.subdomain]
                    self.exits[req] = frozenset(
                        v for v in range(len(space)) if space.exit_of(v, req.entry) == req.exit
                    )
        missing = [f.key for f in self.flows if not self.by_flow.get(f.key)]
        if missing:
            raise NoPathError(missing)

    def cr(self, flow: Flow, p: int) -> bool:
        return p in self.by_flow.get(flow.key, ())

    def dst(self, p: int, d: str) -> bool:
        return self.paths[p].dst == d

    def tr(self, p: int, u: str, v: str) -> bool:
        return self.paths[p].traverses(u, v)

    def consistent(self, p: int, k: int, vector: int) -> bool:
        """``cons``: True when scenario ``vector`` of sub-domain ``k`` sends
        path ``p`` the way it goes, or when ``p`` places no demand on ``k``."""
        return all(vector in self.exits[req] for req in self.paths[p].requirements_in(k))

    def paths_of(self, flow: Flow) -> list[RoutePath]:
        return [self.paths[i] for i in self.by_flow[flow.key]]

    def dump(self) -> str:
        lines = []
        for f in self.flows:
            for i in self.by_flow[f.key]:
                lines.append(f"{f.src}->{f.dst} #{i}: {self.paths[i]}")
        return "\n".join(lines)


def consistency(path: RoutePath, k: int, d: str, metrics: Sequence[int], space: SubdomainAdvertisementSpace) -> bool:
    """Whether advertising ``metrics`` for ``d`` in sub-domain ``k`` keeps ``path``.

    Vacuously true when the path is not headed to ``d`` or meets ``k`` only
    at border nodes.
    """
    if path.dst != d:
        return True
    reqs = path.requirements_in(k)
    if not reqs:
        return True
    try:
        exits = exit_vector(space.distances, metrics)
    except TieError:
        return False
    return all(space.borders[exits[space.ospf.index(req.entry)]] == req.exit for req in reqs)


class _Walker:
    def __init__(self, topo, partitioning, spaces, max_sdn_chain, allow_reentry):
        self.topo = topo
        self.p = partitioning
        self.spaces = spaces
        self.max_chain = max_sdn_chain
        self.reentry = allow_reentry
        self.owner = {r: sd.index for sd in partitioning.subdomains for r in sd.ospf}
        self._seg_cache: dict[tuple[str, str], tuple[str, ...]] = {}
        self._local_cache: dict[tuple[str, str], tuple[str, ...]] = {}
        self._exit_ok: dict[tuple[int, str, str], bool] = {}

    def segment(self, r: str, target: str) -> tuple[str, ...]:
        key = (r, target)
        if key not in self._seg_cache:
            sd = self.p.subdomain(self.owner[r])
            restrict = set(sd.ospf) | {target}
            self._seg_cache[key] = least_cost_path(self.topo, restrict, r, target)[0]
        return self._seg_cache[key]

    def local_segment(self, r: str, dst: str) -> tuple[str, ...]:
        """OSPF route from ``r`` to a destination of its own sub-domain, over
        all of the sub-domain's nodes, up to the first border it reaches."""
        key = (r, dst)
        if key not in self._local_cache:
            sd = self.p.subdomain(self.owner[r])
            path = least_cost_path(self.topo, set(sd.nodes) | {dst}, r, dst)[0]
            border_set = set(sd.borders)
            cut = next((i for i, n in enumerate(path) if n in border_set), len(path) - 1)
            self._local_cache[key] = path[: cut + 1]
        return self._local_cache[key]

    def exit_possible(self, k: int, r: str, b: str) -> bool:
        key = (k, r, b)
        if key not in self._exit_ok:
            space = self.spaces[k]
            self._exit_ok[key] = any(space.exit_of(v, r) == b for v in range(len(space)))
        return self._exit_ok[key]

    def walk(self, src: str, dst: str) -> list[RoutePath]:
        out: list[RoutePath] = []
        self._from(src, dst, (src,), (), (), frozenset(), 0, out)
        return out

    def _from(self, u, dst, nodes, segs, reqs, used, chain, out):
        k = self.owner.get(u)
        if k is not None:
            self._ospf(u, k, dst, nodes, segs, reqs, used | {k}, out)
        else:
            self._sdn(u, dst, nodes, segs, reqs, used, chain, out)

    def _ospf(self, r, k, dst, nodes, segs, reqs, used, out):
        sd = self.p.subdomain(k)
        if self.owner.get(dst) == k:
            seg = self.local_segment(r, dst)
            if set(seg[1:]) & set(nodes):
                return
            new_nodes = nodes + seg[1:]
            new_segs = segs + (Segment(OSPF, seg, k),)
            if seg[-1] == dst:
                out.append(RoutePath(nodes[0], dst, new_nodes, new_segs, reqs))
            else:
                self._sdn(seg[-1], dst, new_nodes, new_segs, reqs, used, 0, out)
            return
        visited = set(nodes)
        for b in sd.borders:
            if b in visited or not self.exit_possible(k, r, b):
                continue
            seg = self.segment(r, b)
            if set(seg[1:]) & visited:
                continue
            new_nodes = nodes + seg[1:]
            new_segs = segs + (Segment(OSPF, seg, k),)
            new_reqs = reqs + (Requirement(k, r, b),)
            if b == dst:
                out.append(RoutePath(nodes[0], dst, new_nodes, new_segs, new_reqs))
            else:
                self._sdn(b, dst, new_nodes, new_segs, new_reqs, used, 0, out)

    def _sdn(self, u, dst, nodes, segs, reqs, used, chain, out):
        if self.max_chain is not None and chain >= self.max_chain:
            return
        visited = set(nodes)
        for v in self.topo.neighbors(u):
            if v in visited:
                continue
            link = Segment(SDN, (u, v))
            if v == dst:
                out.append(RoutePath(nodes[0], dst, nodes + (v,), segs + (link,), reqs))
                continue
            k = self.owner.get(v)
            if k is None:
                self._sdn(v, dst, nodes + (v,), segs + (link,), reqs, used, chain + 1, out)
            elif self.reentry or k not in used:
                self._ospf(v, k, dst, nodes + (v,), segs + (link,), reqs, used | {k}, out)


def _drop_dominated(paths: list[RoutePath]) -> list[RoutePath]:
    """Among paths with the same node sequence keep only those whose
    requirements are not a superset of another's."""
    by_nodes: dict[tuple[str, ...], list[RoutePath]] = {}
    for p in paths:
        by_nodes.setdefault(p.nodes, []).append(p)
    out = []
    for p in paths:
        reqs = set(p.requirements)
        rivals = by_nodes[p.nodes]
        if len(rivals) > 1 and any(
            q is not p and (set(q.requirements) < reqs or (set(q.requirements) == reqs and rivals.index(q) < rivals.index(p)))
            for q in rivals
        ):
            continue
        out.append(p)
    return out


def enumerate_paths(
    topo: Topology,
    partitioning: Partitioning,
    spaces: Mapping[int, SubdomainAdvertisementSpace],
    flows: Iterable[Flow],
    max_sdn_chain: int | None = None,
    allow_reentry: bool = True,
) -> PathTables:
    """All admissible paths for every flow under the hybrid routing scheme.

    ``max_sdn_chain`` optionally bounds consecutive SDN links. Without it the
    bound is implicit: each link of a run starts at a different border, so a
    run is never longer than the number of borders. With ``allow_reentry``
    false a path visits each sub-domain at most once. Segments through a
    border no advertisement can make the entry node use are pruned.

    Raises:
        NoPathError: a flow is left without any admissible path.
    """
    if max_sdn_chain is not None and max_sdn_chain < 1:
        raise ValueError("max_sdn_chain must be >= 1")
    flows = tuple(flows)
    walker = _Walker(topo, partitioning, spaces, max_sdn_chain, allow_reentry)
    paths: list[RoutePath] = []
    for f in flows:
        paths.extend(_drop_dominated(walker.walk(f.src, f.dst)))
    log.debug("enumerated %d paths for %d flows", len(paths), len(flows))
    return PathTables(flows, tuple(paths), dict(spaces))


def ospf_tables(topo: Topology, flows: Iterable[Flow]) -> PathTables:
    """One path per flow: the tie-broken least-cost path over the whole topology."""
    flows = tuple(flows)
    trees: dict = {}
    paths = []
    for f in flows:
        if f.src not in trees:
            trees[f.src] = shortest_path_tree(topo, None, f.src)
        path = trees[f.src].path.get(f.dst)
        if path is None:
            raise NoPathError([f.key])
        paths.append(RoutePath(f.src, f.dst, path))
    return PathTables(flows, tuple(paths))


def full_sdn_tables(
    topo: Topology,
    flows: Iterable[Flow],
    hop_slack: int = 3,
    max_paths: int | None = None,
    include: Iterable[PathTables] = (),
) -> PathTables:
    """Candidate paths when every node is SDN-controlled.

    Per flow: simple paths up to the shortest hop count plus ``hop_slack``,
    fewest hops first (at most ``max_paths`` of them), plus every path of the
    tables in ``include`` so the candidate set contains theirs.
    """
    import networkx as nx

    flows = tuple(flows)
    g = topo.to_networkx()
    extra: dict[tuple[str, str], list[tuple[str, ...]]] = {}
    for tables in include:
        for p in tables.paths:
            extra.setdefault((p.src, p.dst), []).append(p.nodes)
    paths: list[RoutePath] = []
    for f in flows:
        seen: set[tuple[str, ...]] = set()
        found: list[tuple[str, ...]] = []
        try:
            bound = None
            for path in nx.shortest_simple_paths(g, f.src, f.dst):
                hops = len(path) - 1
                if bound is None:
                    bound = hops + hop_slack
                if hops > bound or (max_paths is not None and len(found) >= max_paths):
                    break
                found.append(tuple(path))
        except nx.NetworkXNoPath:
            pass
        # equal-hop paths come out in arbitrary order; fix it
        found.sort(key=lambda p: (len(p), p))
        for nodes in found + extra.get(f.key, []):
            if nodes not in seen:
                seen.add(nodes)
                paths.append(RoutePath(f.src, f.dst, nodes))
    return PathTables(flows, tuple(paths))
