"""Independent brute-force references the test suites compare against."""

from __future__ import annotations

import itertools
import random

import networkx as nx
import numpy as np

from sdnpart.lsa import TieError, exit_vector
from sdnpart.topology import Link, Topology


def brute_force_exit_vectors(distances, span: int | None = None) -> set[tuple[int, ...]]:
    """Every tie-free exit vector reachable by metric vectors in ``[0, span]^beta``.

    Vectorized over the whole grid. ``span`` defaults to ``2 * delta_max + 2``.
    """
    D = np.asarray(distances, dtype=np.int64)
    alpha, beta = D.shape
    if span is None:
        span = 2 * int(D.max() - D.min()) + 2
    axes = np.meshgrid(*[np.arange(span + 1)] * beta, indexing="ij")
    M = np.stack([a.ravel() for a in axes], axis=1)  # (G, beta)
    totals = D[None, :, :] + M[:, None, :]  # (G, alpha, beta)
    best = totals.min(axis=2, keepdims=True)
    unique = (totals == best).sum(axis=2) == 1
    ok = unique.all(axis=1)
    exits = totals[ok].argmin(axis=2)
    return {tuple(int(x) for x in row) for row in np.unique(exits, axis=0)}


def separator_optimum(topo: Topology, K: int, MAX: int, size_bounds=None):
    """Minimum sum of squared sub-domain sizes over all labelings.

    A valid labeling makes each sub-domain a connected set with no links to
    other sub-domains, so sub-domains are exactly the components left after
    deleting the border set, and there must be exactly ``K`` of them.
    Returns ``(cost, borders, groups)`` or None when infeasible.
    """
    nodes = sorted(topo.node_ids)
    lb, ub = size_bounds if size_bounds else (1, len(nodes))
    best = None
    for size in range(1, MAX + 1):
        for S in itertools.combinations(nodes, size):
            rest = [n for n in nodes if n not in S]
            comps = topo.components(rest)
            if len(comps) != K or any(not lb <= len(c) <= ub for c in comps):
                continue
            cost = sum(len(c) ** 2 for c in comps)
            if best is None or cost < best[0]:
                best = (cost, S, comps)
    return best


def greedy_bfs_partition(topo: Topology, K: int, MAX: int, seed: int = 0):
    """Grow ``K`` regions by BFS from spread-out seeds; nodes where regions
    meet become borders. Returns the sum of squared sizes of a valid result,
    or None when this heuristic fails on the instance."""
    rng = random.Random(seed)
    nodes = sorted(topo.node_ids)
    best = None
    for _ in range(30):
        seeds = rng.sample(nodes, K)
        label = {s: i for i, s in enumerate(seeds)}
        frontier = list(seeds)
        borders = set()
        while frontier:
            nxt = []
            for u in frontier:
                if u in borders:
                    continue
                for v in topo.neighbors(u):
                    if v in borders:
                        continue
                    if v not in label:
                        label[v] = label[u]
                        nxt.append(v)
                    elif label[v] != label[u]:
                        borders.add(v)
            frontier = nxt
        rest = [n for n in nodes if n not in borders]
        comps = topo.components(rest)
        if len(borders) <= MAX and len(comps) == K:
            cost = sum(len(c) ** 2 for c in comps)
            best = cost if best is None else min(best, cost)
    return best


def random_connected_topology(seed: int, n: int, extra: int, metric_range=(10, 10)) -> Topology:
    """Random spanning tree plus ``extra`` chords, ids ``n0..``."""
    rng = random.Random(seed)
    ids = [f"n{i}" for i in range(n)]
    edges = set()
    for i in range(1, n):
        j = rng.randrange(i)
        edges.add((ids[j], ids[i]))
    pairs = [(a, b) for a, b in itertools.combinations(ids, 2) if (a, b) not in edges]
    rng.shuffle(pairs)
    edges.update(pairs[:extra])
    return Topology(ids, [Link(a, b, rng.randint(*metric_range)) for a, b in sorted(edges)])


def random_instance_topology(seed: int, n_range=(10, 15), metric_range=(10, 10)) -> Topology:
    """Seeded sparse backbone-like graph: connected, minimum degree 2."""
    rng = random.Random(seed)
    n = rng.randint(*n_range)
    while True:
        g = nx.gnm_random_graph(n, rng.randint(int(1.4 * n), int(1.9 * n)), seed=rng.randrange(10**9))
        if nx.is_connected(g) and min(d for _, d in g.degree()) >= 2:
            break
    ids = [f"n{i:02d}" for i in range(n)]
    links = [Link(ids[a], ids[b], rng.randint(*metric_range)) for a, b in sorted(g.edges())]
    return Topology(ids, links)


def all_simple_paths(topo: Topology, src: str, dst: str):
    g = topo.to_networkx()
    return [tuple(p) for p in nx.all_simple_paths(g, src, dst)]


def path_cost(topo: Topology, path) -> int:
    return sum(topo.metric(u, v) for u, v in zip(path, path[1:]))


def dominance_instance(seed: int, metric_range=(1, 30), max_draws: int = 200):
    """Seeded 10-15 node instance on which OSPF routing is one of the
    partitioned routings: least-cost paths are unique and every flow's OSPF
    path is admissible under the K=2, MAX=3 partitioning. Metrics are redrawn
    until both hold. Returns ``(topo, partitioning, flows, draws)``."""
    from sdnpart.optimize import admits, ospf_baseline, routing_tables
    from sdnpart.partition import partition
    from sdnpart.topology import has_unique_paths

    from sdnpart.harness import generate_demands

    shape = random_instance_topology(seed)
    p = partition(shape, 2, 3)
    rng = random.Random(seed)
    for draw in range(max_draws):
        topo = Topology(shape.node_ids, [Link(l.a, l.b, rng.randint(*metric_range)) for l in shape.links])
        if not has_unique_paths(topo, None)[0]:
            continue
        flows = generate_demands(topo, seed)
        tables = routing_tables("sdnpart", topo, flows, p)
        if admits(topo, tables, ospf_baseline(topo, flows)):
            return topo, p, flows, draw
    raise RuntimeError(f"no admissible metrics for seed {seed}")


def brute_force_routing(tables, score):
    """Best ``score(choice, assign)`` over every path choice per flow and every
    scenario per (sub-domain, destination) pair that choice depends on.

    Consistency is checked against the advertised metrics directly. ``score``
    returns None for infeasible choices. Returns ``(value, choice, assign)``.
    """
    from sdnpart.paths import consistency

    spaces = tables.spaces
    pairs = sorted({(r.subdomain, p.dst) for p in tables.paths for r in p.requirements})
    best = None
    for choice in itertools.product(*[tables.by_flow[f.key] for f in tables.flows]):
        chosen = [tables.paths[i] for i in choice]
        for vecs in itertools.product(*[range(len(spaces[k])) for k, _ in pairs]):
            assign = dict(zip(pairs, vecs))
            if not all(
                consistency(p, k, d, spaces[k].vectors[v].metrics, spaces[k])
                for p in chosen
                for (k, d), v in assign.items()
            ):
                continue
            value = score(chosen, assign)
            if value is not None and (best is None or value < best[0] - 1e-9):
                best = (value, chosen, assign)
    return best


def directional_load(topo, flows, chosen):
    loads = {d: 0.0 for link in topo.links for d in link.directions}
    demand = {f.key: f.demand for f in flows}
    for p in chosen:
        for u, v in p.links:
            loads[(u, v)] += demand[(p.src, p.dst)]
    return loads


def fewest_changes(distances, exits, prev):
    """Grid search for the fewest components to change in ``prev``."""
    beta = len(distances[0])
    if prev is None:
        return beta
    span = max(max(prev), 0) + 2 * (max(map(max, distances)) - min(map(min, distances))) + 2
    best = beta
    for m in itertools.product(range(span + 1), repeat=beta):
        n = sum(x != y for x, y in zip(m, prev))
        if n < best:
            try:
                if exit_vector(distances, m) == tuple(exits):
                    best = n
            except TieError:
                pass
    return best


def tree_links(topo, partitioning) -> set[frozenset]:
    """Links on some least-cost path from an OSPF router to any node of its
    sub-domain, computed inside the sub-domain."""
    out = set()
    for sd in partitioning.subdomains:
        g = nx.Graph()
        for link in topo.links:
            if {link.a, link.b} <= set(sd.nodes) and not (partitioning.is_border(link.a) and partitioning.is_border(link.b)):
                g.add_edge(link.a, link.b, weight=link.metric)
        dist = dict(nx.all_pairs_dijkstra_path_length(g))
        for s in sd.ospf:
            for t in sd.nodes:
                for u, v, w in g.edges(data="weight"):
                    for x, y in ((u, v), (v, u)):
                        if t in dist[y] and dist[s].get(x, float("inf")) + w + dist[y][t] == dist[s].get(t):
                            out.add(frozenset((u, v)))
    return out
