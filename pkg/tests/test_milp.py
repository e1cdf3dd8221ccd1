import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdnpart import milp

BACKENDS = ["highs", "bnb", "exhaustive"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_integer_lower_bound(backend):
    m = milp.MilpModel()
    x = m.integer("x", 0, 10)
    m.add_constraint({x: 1}, ">=", 3)
    m.minimize({x: 1})
    sol = milp.solve(m, backend=backend)
    assert sol.status is milp.Status.OPTIMAL
    assert sol[x] == 3 and sol.objective == pytest.approx(3)


@pytest.mark.parametrize("backend", BACKENDS)
def test_contradiction_is_infeasible(backend):
    m = milp.MilpModel()
    x = m.integer("x", 0, 5)
    m.add_constraint({x: 1}, "<=", 1)
    m.add_constraint({x: 1}, ">=", 2)
    m.minimize({x: 1})
    assert milp.solve(m, backend=backend).status is milp.Status.INFEASIBLE


def test_unbounded_detected():
    m = milp.MilpModel()
    y = m.continuous("y", -np.inf)
    m.minimize({y: 1})
    with pytest.raises(milp.UnboundedError):
        milp.solve(m)


def knapsack(values, weights, cap):
    m = milp.MilpModel("knapsack")
    xs = [m.binary(f"x{i}") for i in range(len(values))]
    m.add_constraint(dict(zip(xs, weights)), "<=", cap)
    m.minimize({x: -v for x, v in zip(xs, values)})
    return m, xs


def brute_knapsack(values, weights, cap):
    best = 0
    for bits in itertools.product([0, 1], repeat=len(values)):
        if sum(w * b for w, b in zip(weights, bits)) <= cap:
            best = max(best, sum(v * b for v, b in zip(values, bits)))
    return -best


items = st.lists(st.integers(1, 40), min_size=10, max_size=10)


@settings(max_examples=25, deadline=None)
@given(items, items, st.integers(10, 150))
def test_knapsack_matches_enumeration(values, weights, cap):
    m, _ = knapsack(values, weights, cap)
    expected = brute_knapsack(values, weights, cap)
    for backend in BACKENDS:
        sol = milp.solve(m, backend=backend)
        assert sol.objective == pytest.approx(expected), backend
        assert m.violations(sol.x) == []
        assert sol.gap <= 1e-6


@settings(max_examples=25, deadline=None)
@given(items, items, st.integers(10, 150))
def test_lp_bound_below_integer_optimum(values, weights, cap):
    m, _ = knapsack(values, weights, cap)
    status, _, value = milp.lp_relaxation(m)
    assert status == "optimal"
    assert value <= brute_knapsack(values, weights, cap) + 1e-7


def epigraph_model(loads, pieces):
    """Assign each item to one of two bins; pay a convex cost per bin."""
    m = milp.MilpModel("epigraph")
    xs = [m.binary(f"x{i}") for i in range(len(loads))]
    k0, k1 = m.continuous("k0"), m.continuous("k1")
    total = sum(loads)
    for a, b in pieces:
        m.add_constraint([(k0, 1)] + [(x, -a * w) for x, w in zip(xs, loads)], ">=", b)
        m.add_constraint([(k1, 1)] + [(x, a * w) for x, w in zip(xs, loads)], ">=", b + a * total)
    m.minimize({k0: 1, k1: 1})
    return m


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=2, max_size=12))
def test_epigraph_closed_form_agrees(loads):
    pieces = [(0, 0), (1, -4), (3, -12)]
    m = epigraph_model(loads, pieces)
    cost = lambda x: max(a * x + b for a, b in pieces)
    expected = min(
        cost(sum(w for w, s in zip(loads, bits) if s)) + cost(sum(w for w, s in zip(loads, bits) if not s))
        for bits in itertools.product([0, 1], repeat=len(loads))
    )
    for backend in BACKENDS:
        assert milp.solve(m, backend=backend).objective == pytest.approx(expected), backend


def test_node_limit_returns_incumbent_or_optimum():
    rng = np.random.default_rng(3)
    values, weights = rng.integers(10, 60, 30).tolist(), rng.integers(10, 60, 30).tolist()
    m, _ = knapsack(values, weights, 300)
    sol = milp.solve(m, backend="bnb", node_limit=5)
    assert sol.status in (milp.Status.FEASIBLE, milp.Status.OPTIMAL, milp.Status.UNKNOWN)
    if sol.has_solution:
        assert m.violations(sol.x) == []
        assert sol.bound <= sol.objective + 1e-9


def test_solution_lookup_and_lp_export():
    m = milp.MilpModel("tiny")
    x = m.binary("x[a,b]")
    y = m.integer("y", 0, 4)
    m.add_constraint({x: 2, y: 1}, ">=", 3, "cover")
    m.minimize({x: 3, y: 2})
    sol = milp.solve(m)
    assert sol["y"] == sol[y]
    text = milp.to_lp_format(m)
    assert "Minimize" in text and "cover" in text and "Binary" in text


def test_unknown_backend():
    with pytest.raises(ValueError):
        milp.solve(milp.MilpModel(), backend="cplex")


def test_fixed_copy_pins_variables():
    m, xs = knapsack([5, 4, 3], [4, 3, 2], 5)
    sub = m.fixed({xs[0]: 1})
    assert milp.solve(sub).objective == -5
    assert milp.solve(m).objective == -7
    assert sub.constraints is m.constraints


def test_start_point_is_kept_under_tight_limits():
    rng = np.random.default_rng(5)
    values, weights = rng.integers(10, 60, 40).tolist(), rng.integers(10, 60, 40).tolist()
    m, xs = knapsack(values, weights, 400)
    greedy = np.zeros(len(xs))
    room = 400
    for i in np.argsort([-v / w for v, w in zip(values, weights)]):
        if weights[i] <= room:
            greedy[i], room = 1, room - weights[i]
    sol = milp.solve(m, node_limit=1, start=greedy)
    assert sol.has_solution and m.violations(sol.x) == []
    assert sol.objective <= m.evaluate(greedy) + 1e-9
