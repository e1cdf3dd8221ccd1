"""Advertisement spaces: every routing scenario a sub-domain's borders can induce.

Inside sub-domain ``k`` each OSPF node ``r`` reaches an external destination
through the border ``b`` minimizing ``delta(r, b) + m[b]``, where ``m`` is the
vector of metrics the borders advertise for that destination. Only the
resulting exit vector matters, so metric vectors are enumerated up to
equivalence: one representative per distinct, tie-free exit vector.

Enumeration walks all quantity vectors (how many nodes leave through each
border) like a tally counter. For a fixed quantity vector, a tie-free exit
vector is the unique minimum-cost assignment of nodes to border slots, so
one assignment solve plus a potential check per quantity vector finds
every scenario, and no two scenarios share a quantity vector.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .partition import Partitioning, Subdomain
from .topology import Topology, shortest_path_tree

Matrix = Sequence[Sequence[int]]


class TieError(ValueError):
    """A metric vector leaves some node with several equally short exits."""

    def __init__(self, node: int, borders: tuple[int, ...]):
        super().__init__(f"node {node} ties between borders {borders}")
        self.node = node
        self.borders = borders


def _check(distances: Matrix) -> tuple[int, int]:
    alpha = len(distances)
    if alpha == 0 or len(distances[0]) == 0:
        raise ValueError("distance matrix must be non-empty")
    beta = len(distances[0])
    if any(len(row) != beta for row in distances):
        raise ValueError("distance matrix rows differ in length")
    return alpha, beta


def delta_max(distances: Matrix) -> int:
    """Largest difference between any two node-to-border distances."""
    _check(distances)
    flat = [d for row in distances for d in row]
    return max(flat) - min(flat)


def exit_vector(distances: Matrix, metrics: Sequence[int]) -> tuple[int, ...]:
    """Exit border index for every OSPF node; raises TieError on ambiguity."""
    alpha, beta = _check(distances)
    if len(metrics) != beta:
        raise ValueError(f"expected {beta} metrics, got {len(metrics)}")
    out = []
    for r, row in enumerate(distances):
        totals = [row[b] + metrics[b] for b in range(beta)]
        best = min(totals)
        winners = tuple(b for b, t in enumerate(totals) if t == best)
        if len(winners) > 1:
            raise TieError(r, winners)
        out.append(winners[0])
    return tuple(out)


def quantity_vector(exits: Sequence[int], beta: int) -> tuple[int, ...]:
    """Number of nodes leaving through each border, in border order."""
    counts = [0] * beta
    for e in exits:
        counts[e] += 1
    return tuple(counts)


def count_bound(alpha: int, beta: int, limit: int = 10**18) -> int:
    """Number of quantity vectors: multisets of size ``alpha`` over ``beta`` borders."""
    if alpha < 1 or beta < 1:
        raise ValueError("alpha and beta must be >= 1")
    n = math.comb(beta + alpha - 1, alpha)
    if n > limit:
        raise OverflowError(f"count_bound({alpha}, {beta}) exceeds {limit}")
    return n


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All non-negative ``parts``-vectors summing to ``total``, in tally order.

    Starts at ``(total, 0, ..., 0)``. Each step moves one unit from the
    lowest non-empty position into the next one, returning the rest to the
    first position, so the lowest index counts fastest.
    """
    q = [total] + [0] * (parts - 1)
    yield tuple(q)
    while True:
        i = 0
        while i < parts - 1 and q[i] == 0:
            i += 1
        if i == parts - 1:
            return
        v = q[i]
        q[i] = 0
        q[i + 1] += 1
        q[0] = v - 1
        yield tuple(q)


def _solve_difference_constraints(
    n: int, edges: Mapping[tuple[int, int], int], fixed: Mapping[int, int] | None = None
) -> tuple[int, ...] | None:
    """Least non-negative integer ``x`` with ``x[v] - x[u] >= w`` for every edge.

    ``fixed`` pins components to exact values. Returns None when the system
    is infeasible (a positive cycle).
    """
    src = n
    arcs = [(u, v, w) for (u, v), w in edges.items()]
    arcs += [(src, v, 0) for v in range(n)]
    for j, val in (fixed or {}).items():
        arcs.append((src, j, val))
        arcs.append((j, src, -val))
    dist = [0] * (n + 1)
    for _ in range(n + 2):
        changed = False
        for u, v, w in arcs:
            if dist[u] + w > dist[v]:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            base = dist[src]
            return tuple(d - base for d in dist[:n])
    return None


def _exit_constraints(distances: Matrix, exits: Sequence[int]) -> dict[tuple[int, int], int]:
    # node r keeps exit e strictly: m[b] - m[e] >= d[r][e] - d[r][b] + 1
    edges: dict[tuple[int, int], int] = {}
    beta = len(distances[0])
    for r, e in enumerate(exits):
        for b in range(beta):
            if b != e:
                w = distances[r][e] - distances[r][b] + 1
                if edges.get((e, b), -math.inf) < w:
                    edges[(e, b)] = w
    return edges


def representative(distances: Matrix, exits: Sequence[int]) -> tuple[int, ...] | None:
    """Least non-negative metric vector realizing ``exits`` without ties, or None."""
    beta = len(distances[0])
    return _solve_difference_constraints(beta, _exit_constraints(distances, exits))


def min_change_representative(
    distances: Matrix, exits: Sequence[int], previous: Sequence[int] | None
) -> tuple[int, ...] | None:
    """Metric vector realizing ``exits`` that keeps most components of ``previous``.

    Among vectors changing the fewest components, the one keeping the
    lexicographically first subset of positions is returned, with the
    remaining components as small as possible. None if ``exits`` is not
    realizable.
    """
    beta = len(distances[0])
    edges = _exit_constraints(distances, exits)
    if previous is None:
        return _solve_difference_constraints(beta, edges)
    for size in range(beta, -1, -1):
        for keep in itertools.combinations(range(beta), size):
            sol = _solve_difference_constraints(beta, edges, {j: int(previous[j]) for j in keep})
            if sol is not None:
                return sol
    return None


@dataclass(frozen=True)
class AdvertisementVector:
    """One routing scenario: metric vector with its exit and quantity vectors."""

    metrics: tuple[int, ...]
    exits: tuple[int, ...]
    quantities: tuple[int, ...]


@dataclass(frozen=True)
class SubdomainAdvertisementSpace:
    subdomain: int
    ospf: tuple[str, ...]
    borders: tuple[str, ...]
    distances: tuple[tuple[int, ...], ...]
    delta_max: int
    vectors: tuple[AdvertisementVector, ...]

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def alpha(self) -> int:
        return len(self.distances)

    @property
    def beta(self) -> int:
        return len(self.distances[0])

    def exit_of(self, vector: int, node: str) -> str:
        """Exit border id of OSPF ``node`` under scenario number ``vector``."""
        return self.borders[self.vectors[vector].exits[self.ospf.index(node)]]

    def exit_ids(self, vector: int) -> tuple[str, ...]:
        return tuple(self.borders[e] for e in self.vectors[vector].exits)

    def find_exits(self, exits: Sequence[int]) -> int | None:
        exits = tuple(exits)
        for i, v in enumerate(self.vectors):
            if v.exits == exits:
                return i
        return None

    def to_dict(self) -> dict:
        return {
            "subdomain": self.subdomain,
            "ospf": list(self.ospf),
            "borders": list(self.borders),
            "distances": [list(r) for r in self.distances],
            "delta_max": self.delta_max,
            "vectors": [
                {"metrics": list(v.metrics), "exits": [self.borders[e] for e in v.exits], "quantities": list(v.quantities)}
                for v in self.vectors
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> SubdomainAdvertisementSpace:
        borders = tuple(data["borders"])
        vectors = tuple(
            AdvertisementVector(
                tuple(v["metrics"]), tuple(borders.index(e) for e in v["exits"]), tuple(v["quantities"])
            )
            for v in data["vectors"]
        )
        return cls(
            data["subdomain"],
            tuple(data["ospf"]),
            borders,
            tuple(tuple(r) for r in data["distances"]),
            data["delta_max"],
            vectors,
        )


def enumerate_metric_vectors(
    distances: Matrix,
    subdomain: int = 0,
    ospf: Sequence[str] | None = None,
    borders: Sequence[str] | None = None,
) -> SubdomainAdvertisementSpace:
    """All valid, pairwise non-equivalent metric vectors for a distance matrix."""
    alpha, beta = _check(distances)
    D = tuple(tuple(int(x) for x in row) for row in distances)
    cost = np.asarray(D, dtype=float)
    found: list[AdvertisementVector] = []
    for q in compositions(alpha, beta):
        cols = [b for b in range(beta) for _ in range(q[b])]
        rows, slots = linear_sum_assignment(cost[:, cols])
        exits = [0] * alpha
        for r, c in zip(rows, slots):
            exits[r] = cols[c]
        m = representative(D, exits)
        if m is not None:
            found.append(AdvertisementVector(m, tuple(exits), q))
    return SubdomainAdvertisementSpace(
        subdomain,
        tuple(ospf) if ospf is not None else tuple(f"r{i + 1}" for i in range(alpha)),
        tuple(borders) if borders is not None else tuple(f"b{j + 1}" for j in range(beta)),
        D,
        delta_max(D),
        tuple(found),
    )


def subdomain_distances(topo: Topology, sd: Subdomain) -> tuple[tuple[int, ...], ...]:
    """``delta(r, b)``: least cost from each OSPF node to each border, using only
    the sub-domain's OSPF nodes and that border."""
    cols = []
    for b in sd.borders:
        tree = shortest_path_tree(topo, set(sd.ospf) | {b}, b)
        cols.append([tree.dist[r] for r in sd.ospf])
    return tuple(tuple(cols[j][i] for j in range(len(cols))) for i in range(len(sd.ospf)))


def advertisement_space(topo: Topology, sd: Subdomain) -> SubdomainAdvertisementSpace:
    if not sd.borders:
        raise ValueError(f"sub-domain {sd.index} has no border nodes")
    return enumerate_metric_vectors(subdomain_distances(topo, sd), sd.index, sd.ospf, sd.borders)


def advertisement_spaces(
    topo: Topology, partitioning: Partitioning, parallel: bool = False
) -> dict[int, SubdomainAdvertisementSpace]:
    """Advertisement space of every sub-domain, keyed by sub-domain number."""
    subs = list(partitioning.subdomains)
    if parallel and len(subs) > 1:
        with ProcessPoolExecutor() as pool:
            spaces = list(pool.map(advertisement_space, [topo] * len(subs), subs))
    else:
        spaces = [advertisement_space(topo, sd) for sd in subs]
    return {sd.index: sp for sd, sp in zip(subs, spaces)}
