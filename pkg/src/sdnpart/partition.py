"""Balanced K-way vertex-separator partitioning.

Every node is either an SDN border node or belongs to exactly one of ``K``
OSPF sub-domains. Sub-domains may only touch each other through border
nodes, and the sum of squared sub-domain sizes is minimized so the
sub-domains come out balanced.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import milp
from .topology import Topology

log = logging.getLogger(__name__)

BORDER = 0


class PartitionError(RuntimeError):
    pass


class PartitionInfeasibleError(PartitionError):
    pass


class SolverLimitError(PartitionError):
    """Search stopped at a limit. Carries the best partitioning found, if any."""

    def __init__(self, message: str, best: Partitioning | None, gap: float):
        super().__init__(message)
        self.best = best
        self.gap = gap


@dataclass(frozen=True)
class CostFunction:
    """Convex piecewise-linear cost: the pointwise maximum of affine pieces."""

    pieces: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("cost function needs at least one piece")
        object.__setattr__(self, "pieces", tuple((float(a), float(b)) for a, b in self.pieces))

    def __call__(self, x: float) -> float:
        return max(a * x + b for a, b in self.pieces)

    def minimum(self, lo: float = 0.0) -> float:
        """Smallest value on ``[lo, inf)``. Used as a cheap lower bound."""
        return self(lo) if all(a >= 0 for a, _ in self.pieces) else -math.inf

    @classmethod
    def from_breakpoints(cls, knees: Sequence[float], slopes: Sequence[float], base: float = 0.0):
        """Continuous convex function with the given slope after each knee.

        ``slopes[0]`` applies left of ``knees[0]`` and passes through
        ``(0, base)``; ``slopes[i]`` applies after ``knees[i-1]``.
        """
        if len(slopes) != len(knees) + 1:
            raise ValueError("need one more slope than knees")
        if any(s2 < s1 for s1, s2 in zip(slopes, slopes[1:])):
            raise ValueError("slopes must be non-decreasing for convexity")
        pieces = [(slopes[0], base)]
        value = base + slopes[0] * knees[0]
        prev = knees[0]
        for i, slope in enumerate(slopes[1:]):
            if i > 0:
                value += slopes[i] * (knees[i] - prev)
                prev = knees[i]
            pieces.append((slope, value - slope * prev))
        return cls(tuple(pieces))


def quadratic_secant_pieces(max_size: int) -> CostFunction:
    """Secants of ``x**2`` between consecutive integers ``0..max_size``.

    The pointwise maximum equals ``x**2`` at every integer in that range.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    return CostFunction(tuple((2 * s + 1, -s * (s + 1)) for s in range(max_size)))


@dataclass(frozen=True)
class Subdomain:
    index: int
    ospf: tuple[str, ...]
    borders: tuple[str, ...]

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.ospf + self.borders

    @property
    def alpha(self) -> int:
        return len(self.ospf)

    @property
    def beta(self) -> int:
        return len(self.borders)


@dataclass(frozen=True)
class Partitioning:
    """Border set plus ordered sub-domains.

    Sub-domains are numbered ``1..K`` in order of their smallest OSPF node
    id; each sub-domain's OSPF nodes and adjacent borders are sorted by id.
    """

    K: int
    borders: tuple[str, ...]
    subdomains: tuple[Subdomain, ...]
    objective: float | None = None
    gap: float = 0.0

    @classmethod
    def from_groups(
        cls,
        topo: Topology,
        borders: Iterable[str],
        groups: Iterable[Iterable[str]],
        objective: float | None = None,
        gap: float = 0.0,
    ) -> Partitioning:
        borders = tuple(sorted(borders))
        border_set = set(borders)
        ordered = sorted((tuple(sorted(g)) for g in groups), key=lambda g: g[0] if g else "")
        subs = []
        for k, ospf in enumerate(ordered, 1):
            adj = {v for r in ospf for v in topo.neighbors(r) if v in border_set}
            subs.append(Subdomain(k, ospf, tuple(sorted(adj))))
        return cls(len(subs), borders, tuple(subs), objective, gap)

    @property
    def assignment(self) -> dict[str, int]:
        """Node id to sub-domain number, ``BORDER`` (0) for border nodes."""
        out = {b: BORDER for b in self.borders}
        for sd in self.subdomains:
            for r in sd.ospf:
                out[r] = sd.index
        return out

    def subdomain(self, k: int) -> Subdomain:
        return self.subdomains[k - 1]

    def subdomain_of(self, node: str) -> Subdomain | None:
        for sd in self.subdomains:
            if node in sd.ospf:
                return sd
        return None

    def is_border(self, node: str) -> bool:
        return node in self.borders

    @property
    def sizes(self) -> list[int]:
        return [sd.alpha for sd in self.subdomains]

    def balance_cost(self) -> int:
        return sum(s * s for s in self.sizes)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "borders": list(self.borders),
            "subdomains": [list(sd.ospf) for sd in self.subdomains],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, topo: Topology, text: str) -> Partitioning:
        data = json.loads(text)
        p = cls.from_groups(topo, data["borders"], data["subdomains"])
        if p.K != data["K"]:
            raise PartitionError(f"K={data['K']} but {p.K} sub-domains listed")
        return p

    def restricted_to(self, topo: Topology) -> Partitioning:
        """Re-derive the partitioning on a residual topology.

        Border sets are recomputed from the remaining links and a sub-domain
        that fell apart is split into its connected pieces, which then count
        as separate sub-domains.
        """
        groups = []
        for sd in self.subdomains:
            groups.extend(topo.components(sd.ospf))
        return Partitioning.from_groups(topo, self.borders, groups)


def validate_partitioning(
    topo: Topology, p: Partitioning, max_borders: int | None = None
) -> tuple[bool, list[str]]:
    """Check every structural property of ``p`` against ``topo``.

    Returns ``(ok, violations)`` where each violation is a readable string.
    """
    problems: list[str] = []
    label: dict[str, list[str]] = {n: [] for n in topo.node_ids}
    for b in p.borders:
        if b not in label:
            problems.append(f"unknown border node {b}")
        else:
            label[b].append("border")
    for sd in p.subdomains:
        for r in sd.ospf:
            if r not in label:
                problems.append(f"unknown node {r} in sub-domain {sd.index}")
            else:
                label[r].append(f"sub-domain {sd.index}")
    for n, labels in label.items():
        if len(labels) != 1:
            problems.append(f"node {n} has labels {labels or ['none']}")
    if p.K != len(p.subdomains):
        problems.append(f"K={p.K} but {len(p.subdomains)} sub-domains")
    owner = {r: sd.index for sd in p.subdomains for r in sd.ospf}
    for link in topo.links:
        ka, kb = owner.get(link.a), owner.get(link.b)
        if ka is not None and kb is not None and ka != kb:
            problems.append(f"link {link} joins sub-domains {ka} and {kb}")
    border_set = set(p.borders)
    firsts = []
    for sd in p.subdomains:
        if not sd.ospf:
            problems.append(f"sub-domain {sd.index} is empty")
            continue
        firsts.append(sd.ospf[0])
        if list(sd.ospf) != sorted(sd.ospf):
            problems.append(f"sub-domain {sd.index} nodes not sorted")
        if all(r in topo for r in sd.ospf) and not topo.is_connected(sd.ospf):
            problems.append(f"sub-domain {sd.index} is not connected")
        expected = sorted({v for r in sd.ospf if r in topo for v in topo.neighbors(r) if v in border_set})
        if list(sd.borders) != expected:
            problems.append(f"sub-domain {sd.index} border list {list(sd.borders)} != {expected}")
    if firsts != sorted(firsts):
        problems.append("sub-domains not ordered by smallest node id")
    if max_borders is not None and len(p.borders) > max_borders:
        problems.append(f"{len(p.borders)} border nodes exceed MAX={max_borders}")
    return (not problems, problems)


def build_partition_model(
    topo: Topology, K: int, MAX: int, size_bounds: tuple[int, int] | None = None
):
    """Build the separator ILP. Returns ``(model, gamma, mu, eps, kappa)``."""
    nodes = sorted(topo.node_ids)
    lb, ub = size_bounds if size_bounds else (1, len(nodes))
    lb = max(1, lb)
    costfn = quadratic_secant_pieces(max(1, ub))
    m = milp.MilpModel(f"partition_K{K}_MAX{MAX}")
    gamma = {(n, k): m.binary(f"gamma[{n},{k}]") for n in nodes for k in range(1, K + 1)}
    mu = {n: m.binary(f"mu[{n}]") for n in nodes}
    eps = {k: m.integer(f"eps[{k}]", lb, ub) for k in range(1, K + 1)}
    kappa = {k: m.continuous(f"kappa[{k}]") for k in range(1, K + 1)}
    m.minimize({kappa[k]: 1.0 for k in kappa})
    for k in range(1, K + 1):
        for a, b in costfn.pieces:
            m.add_constraint({kappa[k]: 1.0, eps[k]: -a}, ">=", b, f"cost[{k},{a:g}]")
        m.add_constraint([(eps[k], 1.0)] + [(gamma[n, k], -1.0) for n in nodes], "==", 0, f"size[{k}]")
    for n in nodes:
        m.add_constraint([(mu[n], 1.0)] + [(gamma[n, k], 1.0) for k in range(1, K + 1)], "==", 1, f"label[{n}]")
    for link in topo.links:
        for i, j in link.directions:
            for k in range(1, K + 1):
                # j may join k only if neighbor i is in k or is a border node
                m.add_constraint(
                    {gamma[j, k]: 1.0, gamma[i, k]: -1.0, mu[i]: -1.0}, "<=", 0, f"nbr[{i},{j},{k}]"
                )
    m.add_constraint({mu[n]: 1.0 for n in nodes}, "<=", MAX, "max_borders")
    for k in range(2, K + 1):
        for pos, j in enumerate(nodes):
            terms = [(gamma[j, k], 1.0)] + [(gamma[i, k - 1], -1.0) for i in nodes[:pos]]
            m.add_constraint(terms, "<=", 0, f"order[{j},{k}]")
    return m, gamma, mu, eps, kappa


def _extract(topo, K, sol, gamma, mu) -> tuple[list[str], list[list[str]]]:
    borders = [n for n in sorted(topo.node_ids) if sol[mu[n]] > 0.5]
    groups = [[n for n in sorted(topo.node_ids) if sol[gamma[n, k]] > 0.5] for k in range(1, K + 1)]
    return borders, groups


def partition(
    topo: Topology,
    K: int,
    MAX: int,
    size_bounds: tuple[int, int] | None = None,
    *,
    backend: str = "highs",
    time_limit: float | None = None,
    max_rounds: int = 100,
) -> Partitioning:
    """Optimal balanced partitioning into ``K`` sub-domains with at most ``MAX`` borders.

    Sub-domains must be non-empty and connected. Connectivity is enforced
    lazily: whenever a label covers several islands, cuts requiring a
    separating border of the island to carry the same label are added and
    the model is re-solved.

    Raises:
        PartitionInfeasibleError: no separator of size ``<= MAX`` yields ``K``
            connected sub-domains (within the size bounds).
        SolverLimitError: the time limit stopped the search before optimality.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    if MAX < 1:
        raise ValueError("MAX must be >= 1")
    model, gamma, mu, eps, kappa = build_partition_model(topo, K, MAX, size_bounds)
    for rnd in range(max_rounds):
        sol = milp.solve(model, backend=backend, time_limit=time_limit)
        if sol.status is milp.Status.INFEASIBLE:
            raise PartitionInfeasibleError(f"no {K}-way separator with at most {MAX} border nodes")
        if not sol.has_solution:
            raise SolverLimitError("partitioning stopped without a solution", None, math.inf)
        borders, groups = _extract(topo, K, sol, gamma, mu)
        islands = [topo.components(g) for g in groups]
        if all(len(c) == 1 for c in islands):
            p = Partitioning.from_groups(topo, borders, groups, objective=round(sol.objective, 6), gap=sol.gap)
            if sol.status is not milp.Status.OPTIMAL:
                raise SolverLimitError(f"partitioning gap {sol.gap:.3g}", p, sol.gap)
            return p
        n_cuts = 0
        for comps in islands:
            for ci, comp in enumerate(comps):
                comp_set = set(comp)
                boundary = sorted({v for u in comp for v in topo.neighbors(u) if v not in comp_set})
                u = comp[0]
                for other in comps[ci + 1 :]:
                    v = other[0]
                    for k in range(1, K + 1):
                        terms = [(gamma[u, k], 1.0), (gamma[v, k], 1.0)]
                        terms += [(gamma[w, k], -1.0) for w in boundary]
                        model.add_constraint(terms, "<=", 1, f"conn[{u},{v},{k},{rnd}]")
                        n_cuts += 1
        log.debug("partition round %d: %d connectivity cuts", rnd, n_cuts)
    raise PartitionError(f"connectivity not reached after {max_rounds} rounds")
