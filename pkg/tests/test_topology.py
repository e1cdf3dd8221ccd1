import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_simple_paths, path_cost, random_connected_topology
from sdnpart.topology import (
    DEFAULT_CATALOG,
    BUILTIN_TOPOLOGIES,
    CapacityType,
    DisconnectedError,
    DuplicateLinkError,
    Flow,
    Link,
    ParseError,
    Topology,
    TopologyError,
    UnreachableError,
    format_topology,
    has_unique_paths,
    least_cost_path,
    load_builtin,
    parse_sndlib,
    parse_topology,
    validate_catalog,
)

TRIANGLE = """
NODES
a
b
c
LINKS
a b
b c
c a
"""

CHAIN = """
# chain used for the exit-vector examples
NODES
a
1
2
3
b
LINKS
a 1
1 2
2 3
3 b
"""


def square(metric=10):
    return Topology("abcd", [Link("a", "b", metric), Link("b", "c", metric), Link("c", "d", metric), Link("d", "a", metric)])


def test_triangle_defaults_to_metric_10():
    topo = parse_topology(TRIANGLE)
    assert len(topo.links) == 3
    assert all(link.metric == 10 for link in topo.links)


def test_metric_and_capacity_columns():
    topo = parse_topology("NODES\nx\ny\nLINKS\nx y 7 40\n")
    link = topo.link("y", "x")
    assert (link.metric, link.capacity) == (7, 40.0)


def test_duplicate_link_rejected():
    with pytest.raises(DuplicateLinkError):
        parse_topology(TRIANGLE + "b a\n")


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_topology("NODES\na\nb\nLINKS\na b ten\n")
    assert exc.value.lineno == 5


def test_unknown_node_and_missing_header():
    with pytest.raises(ParseError):
        parse_topology("NODES\na\nLINKS\na z\n")
    with pytest.raises(ParseError):
        parse_topology("a b\n")


def test_disconnected_rejected():
    with pytest.raises(DisconnectedError):
        parse_topology("NODES\na\nb\nc\nd\nLINKS\na b\nc d\n")


def test_invalid_links():
    with pytest.raises(TopologyError):
        Link("a", "a")
    with pytest.raises(TopologyError):
        Link("a", "b", 0)


def test_round_trip_format():
    topo = parse_topology(CHAIN)
    again = parse_topology(format_topology(topo))
    assert again.node_ids == topo.node_ids
    assert [(l.key, l.metric) for l in again.links] == [(l.key, l.metric) for l in topo.links]


def test_sndlib_reader():
    text = """
NODES (
  A ( 1.0 2.0 )
  B ( 3.0 4.0 )
  C ( 5.0 6.0 )
)
LINKS (
  L1 ( A B ) 0.00 0.00 0.00 0.00 ( 40.00 1.00 )
  L2 ( B C ) 0.00 0.00 0.00 0.00 ( )
)
DEMANDS (
  D1 ( A C ) 1 1.0 UNLIMITED
)
"""
    topo = parse_sndlib(text)
    assert topo.node_ids == ("A", "B", "C")
    assert [l.key for l in topo.links] == [("A", "B"), ("B", "C")]
    assert parse_topology(text).node_ids == topo.node_ids


def test_janos_has_39_nodes():
    assert len(load_builtin("janos-us-ca")) == 39


@pytest.mark.parametrize("name", BUILTIN_TOPOLOGIES)
def test_builtins_load_connected(name):
    topo = load_builtin(name)
    assert topo.is_connected()
    assert all(link.metric == 10 for link in topo.links)


def test_chain_least_cost_path():
    topo = parse_topology(CHAIN)
    assert least_cost_path(topo, None, "1", "b") == (("1", "2", "3", "b"), 30)


def test_zero_length_path():
    topo = parse_topology(CHAIN)
    assert least_cost_path(topo, None, "2", "2") == (("2",), 0)


def test_square_tie_broken_lexicographically():
    assert least_cost_path(square(), None, "a", "c") == (("a", "b", "c"), 20)
    assert least_cost_path(square(), None, "c", "a") == (("c", "b", "a"), 20)


def test_restriction_and_unreachable():
    topo = square()
    assert least_cost_path(topo, "acd", "a", "c") == (("a", "d", "c"), 20)
    with pytest.raises(UnreachableError):
        least_cost_path(topo, "ac", "a", "c")


def test_unique_paths_reports():
    assert has_unique_paths(parse_topology(CHAIN), None) == (True, [])
    assert has_unique_paths(parse_topology(TRIANGLE), None) == (True, [])
    ok, tied = has_unique_paths(square(), None)
    assert not ok
    assert sorted(tied) == [("a", "c"), ("b", "d")]


def test_flow_and_catalog_validation():
    with pytest.raises(ValueError):
        Flow("a", "a", 1.0)
    with pytest.raises(ValueError):
        Flow("a", "b", -1.0)
    assert [t.rate for t in validate_catalog(DEFAULT_CATALOG)] == [10, 40, 100]
    with pytest.raises(ValueError):
        validate_catalog([CapacityType(10, 2), CapacityType(40, 1)])


def test_without_link_and_components():
    topo = parse_topology(CHAIN)
    cut = topo.without_link("2", "3")
    assert not cut.is_connected()
    assert sorted(map(sorted, cut.components())) == [["1", "2", "a"], ["3", "b"]]


graphs = st.builds(
    random_connected_topology,
    seed=st.integers(0, 10**6),
    n=st.integers(2, 8),
    extra=st.integers(0, 6),
    metric_range=st.sampled_from([(10, 10), (1, 5), (1, 30)]),
)


@settings(max_examples=60, deadline=None)
@given(graphs)
def test_distance_matches_brute_force_and_is_symmetric(topo):
    for s, t in itertools.combinations(topo.node_ids, 2):
        path, dist = least_cost_path(topo, None, s, t)
        costs = [path_cost(topo, p) for p in all_simple_paths(topo, s, t)]
        assert dist == min(costs) == path_cost(topo, path)
        assert least_cost_path(topo, None, t, s)[1] == dist
        best = min(p for p in all_simple_paths(topo, s, t) if path_cost(topo, p) == dist)
        assert path == best
        assert least_cost_path(topo, None, s, t) == (path, dist)


@settings(max_examples=40, deadline=None)
@given(graphs)
def test_triangle_inequality(topo):
    ids = topo.node_ids
    d = {(s, t): least_cost_path(topo, None, s, t)[1] for s in ids for t in ids}
    for x, y, z in itertools.product(ids, repeat=3):
        assert d[x, z] <= d[x, y] + d[y, z]


@settings(max_examples=40, deadline=None)
@given(graphs)
def test_unique_paths_matches_enumeration(topo):
    expected = []
    for s, t in itertools.combinations(sorted(topo.node_ids), 2):
        costs = [path_cost(topo, p) for p in all_simple_paths(topo, s, t)]
        if costs.count(min(costs)) > 1:
            expected.append((s, t))
    ok, tied = has_unique_paths(topo, None)
    assert sorted(tied) == expected
    assert ok == (not expected)
