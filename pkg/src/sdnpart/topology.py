"""Graph data model, topology file readers and least-cost path machinery.

Links are undirected and carry an integer metric. Equal-cost paths are
resolved by picking the lexicographically smallest node-id sequence, the
same rule everywhere, so that every routing computation is reproducible.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping, Sequence

DEFAULT_METRIC = 10


class TopologyError(ValueError):
    """Base class for malformed or inconsistent topologies."""


class ParseError(TopologyError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DisconnectedError(TopologyError):
    pass


class DuplicateLinkError(TopologyError):
    pass


class UnreachableError(TopologyError):
    pass


@dataclass(frozen=True)
class Node:
    id: str
    index: int


@dataclass(frozen=True)
class Link:
    """Undirected link. Endpoints are stored in id order."""

    a: str
    b: str
    metric: int = DEFAULT_METRIC
    capacity: float | None = None

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop on {self.a!r}")
        if self.b < self.a:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
        if int(self.metric) != self.metric or self.metric < 1:
            raise TopologyError(f"link {self.a}-{self.b}: metric must be an integer >= 1")

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)

    @property
    def directions(self) -> tuple[tuple[str, str], tuple[str, str]]:
        return ((self.a, self.b), (self.b, self.a))

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a

    def __str__(self) -> str:
        return f"{self.a}-{self.b}"


def link_key(u: str, v: str) -> tuple[str, str]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class CapacityType:
    rate: float
    cost: float


DEFAULT_CATALOG = (
    CapacityType(10.0, 1.0),
    CapacityType(40.0, 3.0),
    CapacityType(100.0, 6.0),
)


def validate_catalog(catalog: Sequence[CapacityType]) -> tuple[CapacityType, ...]:
    catalog = tuple(catalog)
    if not catalog:
        raise ValueError("capacity catalog is empty")
    for prev, cur in zip(catalog, catalog[1:]):
        if not (cur.rate > prev.rate and cur.cost > prev.cost):
            raise ValueError("capacity catalog must be strictly increasing in rate and cost")
    return catalog


@dataclass(frozen=True)
class Flow:
    src: str
    dst: str
    demand: float

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"flow {self.src}->{self.dst}: src equals dst")
        if self.demand < 0:
            raise ValueError(f"flow {self.src}->{self.dst}: negative demand")

    @property
    def key(self) -> tuple[str, str]:
        return (self.src, self.dst)


class Topology:
    """Immutable undirected graph of routers and links.

    Args:
        nodes: Node ids. Order defines the dense ``index`` handle.
        links: Links between declared nodes.
        require_connected: Reject disconnected graphs. Failure studies build
            residual graphs with this turned off and check connectivity
            themselves.
    """

    def __init__(
        self,
        nodes: Iterable[str],
        links: Iterable[Link],
        *,
        require_connected: bool = True,
    ):
        ids = list(nodes)
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise TopologyError(f"duplicate node ids: {dup}")
        self._nodes = tuple(Node(i, k) for k, i in enumerate(ids))
        self._by_id = {n.id: n for n in self._nodes}
        self._links: dict[tuple[str, str], Link] = {}
        self._adj: dict[str, dict[str, int]] = {i: {} for i in ids}
        for link in links:
            for end in link.key:
                if end not in self._by_id:
                    raise TopologyError(f"link {link} references unknown node {end!r}")
            if link.key in self._links:
                raise DuplicateLinkError(f"duplicate link {link}")
            self._links[link.key] = link
            self._adj[link.a][link.b] = link.metric
            self._adj[link.b][link.a] = link.metric
        if require_connected and not self.is_connected():
            raise DisconnectedError("topology is not connected")

    @property
    def nodes(self) -> tuple[Node, ...]:
        return self._nodes

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self._nodes)

    @property
    def links(self) -> tuple[Link, ...]:
        return tuple(self._links.values())

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node: str) -> bool:
        return node in self._by_id

    def __repr__(self) -> str:
        return f"Topology({len(self._nodes)} nodes, {len(self._links)} links)"

    def node(self, node_id: str) -> Node:
        return self._by_id[node_id]

    def neighbors(self, node_id: str) -> list[str]:
        return sorted(self._adj[node_id])

    def metric(self, u: str, v: str) -> int:
        return self._adj[u][v]

    def has_link(self, u: str, v: str) -> bool:
        return link_key(u, v) in self._links

    def link(self, u: str, v: str) -> Link:
        try:
            return self._links[link_key(u, v)]
        except KeyError:
            raise TopologyError(f"no link {u}-{v}") from None

    def is_connected(self, restrict: Iterable[str] | None = None) -> bool:
        allowed = set(self._by_id) if restrict is None else set(restrict)
        if not allowed:
            return True
        start = min(allowed)
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in self._adj[u]:
                if v in allowed and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen == allowed

    def components(self, restrict: Iterable[str] | None = None) -> list[list[str]]:
        """Connected components of the induced subgraph, each sorted, ordered by min id."""
        allowed = set(self._by_id) if restrict is None else set(restrict)
        out = []
        seen: set[str] = set()
        for start in sorted(allowed):
            if start in seen:
                continue
            comp = [start]
            seen.add(start)
            stack = [start]
            while stack:
                u = stack.pop()
                for v in self._adj[u]:
                    if v in allowed and v not in seen:
                        seen.add(v)
                        comp.append(v)
                        stack.append(v)
            out.append(sorted(comp))
        return out

    def without_link(self, u: str, v: str) -> Topology:
        key = link_key(u, v)
        if key not in self._links:
            raise TopologyError(f"no link {u}-{v}")
        return Topology(
            self.node_ids,
            [l for k, l in self._links.items() if k != key],
            require_connected=False,
        )

    def with_capacities(self, capacities: Mapping[tuple[str, str], float]) -> Topology:
        links = [replace(l, capacity=capacities.get(l.key, l.capacity)) for l in self.links]
        return Topology(self.node_ids, links, require_connected=False)

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(self.node_ids)
        for l in self.links:
            g.add_edge(l.a, l.b, metric=l.metric, capacity=l.capacity)
        return g


# ---------------------------------------------------------------------------
# File formats


_SNDLIB_NODE = re.compile(r"^\s*(\S+)\s*\(\s*[-+0-9.eE]+\s+[-+0-9.eE]+\s*\)\s*$")
_SNDLIB_LINK = re.compile(r"^\s*(\S+)\s*\(\s*(\S+)\s+(\S+)\s*\)(.*)$")


def parse_topology(text: str) -> Topology:
    """Parse a topology file.

    The plain format has a ``NODES`` section (one id per line) and a
    ``LINKS`` section (``id1 id2 [metric] [capacity_gbps]``). ``#`` starts a
    comment. Files in SNDlib native format are detected and handed to
    :func:`parse_sndlib`.
    """
    if _looks_like_sndlib(text):
        return parse_sndlib(text)

    nodes: list[str] = []
    node_set: set[str] = set()
    links: list[Link] = []
    seen_links: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.upper()
        if head in ("NODES", "LINKS"):
            section = head
            continue
        fields = line.split()
        if section is None:
            raise ParseError(lineno, "content before NODES/LINKS section header")
        if section == "NODES":
            if len(fields) != 1:
                raise ParseError(lineno, f"expected one node id, got {line!r}")
            if fields[0] in node_set:
                raise ParseError(lineno, f"duplicate node {fields[0]!r}")
            nodes.append(fields[0])
            node_set.add(fields[0])
            continue
        if not 2 <= len(fields) <= 4:
            raise ParseError(lineno, f"expected 'id1 id2 [metric] [capacity]', got {line!r}")
        u, v = fields[0], fields[1]
        for end in (u, v):
            if end not in node_set:
                raise ParseError(lineno, f"unknown node {end!r}")
        if u == v:
            raise ParseError(lineno, f"self-loop on {u!r}")
        key = link_key(u, v)
        if key in seen_links:
            raise DuplicateLinkError(
                f"line {lineno}: duplicate link {u}-{v} (first on line {seen_links[key]})"
            )
        seen_links[key] = lineno
        try:
            metric = int(fields[2]) if len(fields) > 2 else DEFAULT_METRIC
            capacity = float(fields[3]) if len(fields) > 3 else None
        except ValueError:
            raise ParseError(lineno, f"bad number in {line!r}") from None
        if metric < 1:
            raise ParseError(lineno, "metric must be >= 1")
        links.append(Link(u, v, metric, capacity))
    return Topology(nodes, links)


def _looks_like_sndlib(text: str) -> bool:
    return text.lstrip().startswith("?SNDlib") or re.search(r"^\s*NODES\s*\(", text, re.M) is not None


def parse_sndlib(text: str, metric: int = DEFAULT_METRIC) -> Topology:
    """Read the ``NODES`` and ``LINKS`` sections of an SNDlib native file.

    Coordinates, pre-installed capacities, module lists and all other
    sections are ignored. Parallel links between the same node pair are
    rejected because the model has no multi-graphs.
    """
    nodes: list[str] = []
    links: list[Link] = []
    seen: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("?"):
            continue
        m = re.match(r"^([A-Z_]+)\s*\($", line)
        if m and section is None:
            section = m.group(1)
            continue
        if line == ")" and section is not None:
            section = None
            continue
        if section == "NODES":
            nm = _SNDLIB_NODE.match(line)
            node_id = nm.group(1) if nm else line.split()[0]
            if node_id in nodes:
                raise ParseError(lineno, f"duplicate node {node_id!r}")
            nodes.append(node_id)
        elif section == "LINKS":
            lm = _SNDLIB_LINK.match(line)
            if not lm:
                raise ParseError(lineno, f"malformed link line {line!r}")
            u, v = lm.group(2), lm.group(3)
            for end in (u, v):
                if end not in nodes:
                    raise ParseError(lineno, f"unknown node {end!r}")
            key = link_key(u, v)
            if key in seen:
                raise DuplicateLinkError(f"line {lineno}: duplicate link {u}-{v}")
            seen[key] = lineno
            links.append(Link(u, v, metric))
    if section is not None:
        raise ParseError(len(text.splitlines()), f"unterminated {section} section")
    return Topology(nodes, links)


BUILTIN_TOPOLOGIES = ("abilene", "cost266", "janos-us-ca", "nobel-eu", "polska")


def load_builtin(name: str) -> Topology:
    """Load one of the bundled SNDlib topologies by name."""
    if name not in BUILTIN_TOPOLOGIES:
        raise KeyError(f"unknown topology {name!r}; bundled: {', '.join(BUILTIN_TOPOLOGIES)}")
    text = resources.files("sdnpart.data").joinpath(f"{name}.txt").read_text()
    return parse_sndlib(text)


def load_topology(spec: str) -> Topology:
    """Load a topology from a file path, or a bundled one by name."""
    if spec in BUILTIN_TOPOLOGIES:
        return load_builtin(spec)
    with open(spec) as fh:
        return parse_topology(fh.read())


def format_topology(topo: Topology) -> str:
    lines = ["NODES", *topo.node_ids, "LINKS"]
    for l in topo.links:
        row = f"{l.a} {l.b} {l.metric}"
        if l.capacity is not None:
            row += f" {l.capacity:g}"
        lines.append(row)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Least-cost paths


@dataclass
class ShortestPathTree:
    """Least-cost paths from one source within a node restriction."""

    source: str
    dist: dict[str, int] = field(default_factory=dict)
    path: dict[str, tuple[str, ...]] = field(default_factory=dict)


def shortest_path_tree(
    topo: Topology, restrict: Iterable[str] | None, src: str
) -> ShortestPathTree:
    """Dijkstra with lexicographic tie-breaking on the node-id sequence.

    Labels are ``(distance, path)`` tuples, so the first time a node is
    popped it carries the least distance and, among equal-distance paths,
    the lexicographically smallest one.
    """
    allowed = None if restrict is None else frozenset(restrict)
    if allowed is not None and src not in allowed:
        raise UnreachableError(f"source {src!r} outside restriction")
    tree = ShortestPathTree(src)
    best: dict[str, tuple[int, tuple[str, ...]]] = {src: (0, (src,))}
    heap = [(0, (src,))]
    while heap:
        d, path = heapq.heappop(heap)
        u = path[-1]
        if u in tree.dist:
            continue
        tree.dist[u] = d
        tree.path[u] = path
        for v, w in topo._adj[u].items():
            if v in tree.dist or (allowed is not None and v not in allowed):
                continue
            label = (d + w, path + (v,))
            if v not in best or label < best[v]:
                best[v] = label
                heapq.heappush(heap, label)
    return tree


def least_cost_path(
    topo: Topology, restrict: Iterable[str] | None, src: str, dst: str
) -> tuple[tuple[str, ...], int]:
    """Least-metric path from ``src`` to ``dst`` using only nodes in ``restrict``.

    ``restrict=None`` means the whole topology. Returns the node sequence and
    its distance.

    Raises:
        UnreachableError: ``dst`` cannot be reached inside the restriction.
    """
    if restrict is not None:
        restrict = frozenset(restrict)
        if dst not in restrict:
            raise UnreachableError(f"destination {dst!r} outside restriction")
    tree = shortest_path_tree(topo, restrict, src)
    if dst not in tree.dist:
        raise UnreachableError(f"{dst!r} unreachable from {src!r}")
    return tree.path[dst], tree.dist[dst]


def has_unique_paths(
    topo: Topology, restrict: Iterable[str] | None = None
) -> tuple[bool, list[tuple[str, str]]]:
    """Report node pairs with more than one least-cost path.

    Returns ``(True, [])`` when every pair inside the restriction has a
    unique least-cost path; otherwise ``False`` and the tied pairs as
    ``(u, v)`` with ``u < v``.
    """
    allowed = sorted(topo.node_ids if restrict is None else set(restrict))
    allowed_set = frozenset(allowed)
    tied = []
    for src in allowed:
        dist = {src: 0}
        count = {src: 1}
        done = set()
        heap = [(0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, w in topo._adj[u].items():
                if v not in allowed_set:
                    continue
                nd = d + w
                if v not in dist or nd < dist[v]:
                    dist[v] = nd
                    count[v] = count[u]
                    heapq.heappush(heap, (nd, v))
                elif nd == dist[v]:
                    count[v] += count[u]
        tied.extend((src, v) for v in sorted(count) if v > src and count[v] > 1)
    return (not tied, tied)


def path_links(path: Sequence[str]) -> list[tuple[str, str]]:
    """Directed hops of a node sequence."""
    return list(zip(path, path[1:]))
