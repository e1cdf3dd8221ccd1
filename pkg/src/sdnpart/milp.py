"""Small mixed-integer linear programming layer.

Models are built from named variables and sparse linear constraints and
always minimize. Three interchangeable search backends are provided:

* ``"highs"``: the HiGHS branch-and-cut solver through ``highspy``. Default.
  Accepts a warm-start incumbent.
* ``"bnb"``: best-first branch-and-bound over LP relaxations (scipy
  ``linprog``), branching on the first fractional integer variable.
* ``"exhaustive"``: enumerates every integer assignment. Continuous
  variables that act as epigraph variables of piecewise-linear costs are set
  in closed form; any other continuous part is solved as an LP per
  assignment.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Union

import highspy
import numpy as np
from scipy import sparse
from scipy.optimize import linprog

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
INT_TOL = 1e-6


class VarType(str, Enum):
    BINARY = "binary"
    INTEGER = "integer"
    CONTINUOUS = "continuous"


class Status(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible-with-gap"
    INFEASIBLE = "infeasible"
    UNKNOWN = "no-solution-within-limits"


class UnboundedError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Var:
    name: str
    index: int
    vtype: VarType
    lb: float
    ub: float

    def __hash__(self) -> int:
        return self.index

    def __repr__(self) -> str:
        return f"Var({self.name})"

    @property
    def is_integer(self) -> bool:
        return self.vtype is not VarType.CONTINUOUS


Terms = Union[Mapping[Var, float], Iterable[tuple[Var, float]]]


@dataclass
class Constraint:
    coefs: dict[int, float]
    sense: str
    rhs: float
    name: str

    def bounds(self) -> tuple[float, float]:
        if self.sense == "<=":
            return -np.inf, self.rhs
        if self.sense == ">=":
            return self.rhs, np.inf
        return self.rhs, self.rhs


def _collect(terms: Terms) -> dict[int, float]:
    items = terms.items() if isinstance(terms, Mapping) else terms
    out: dict[int, float] = {}
    for var, coef in items:
        if coef:
            out[var.index] = out.get(var.index, 0.0) + float(coef)
    return {k: v for k, v in out.items() if v != 0.0}


class MilpModel:
    """Mutable container of variables, constraints and a MIN objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Var] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._by_name: dict[str, Var] = {}

    def __repr__(self) -> str:
        return f"MilpModel({self.name!r}, {len(self.variables)} vars, {len(self.constraints)} cons)"

    def _add(self, name: str, vtype: VarType, lb: float, ub: float) -> Var:
        if name in self._by_name:
            raise ValueError(f"duplicate variable name {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name!r}: lb > ub")
        if vtype is not VarType.CONTINUOUS and not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"integer variable {name!r} needs finite bounds")
        var = Var(name, len(self.variables), vtype, float(lb), float(ub))
        self.variables.append(var)
        self._by_name[name] = var
        return var

    def binary(self, name: str) -> Var:
        return self._add(name, VarType.BINARY, 0.0, 1.0)

    def integer(self, name: str, lb: float, ub: float) -> Var:
        return self._add(name, VarType.INTEGER, lb, ub)

    def continuous(self, name: str, lb: float = 0.0, ub: float = np.inf) -> Var:
        return self._add(name, VarType.CONTINUOUS, lb, ub)

    def var(self, name: str) -> Var:
        return self._by_name[name]

    def add_constraint(self, terms: Terms, sense: str, rhs: float, name: str | None = None) -> Constraint:
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad constraint sense {sense!r}")
        coefs = _collect(terms)
        for idx in coefs:
            if idx >= len(self.variables):
                raise ValueError("constraint references an undeclared variable")
        con = Constraint(coefs, sense, float(rhs), name or f"c{len(self.constraints)}")
        self.constraints.append(con)
        return con

    def minimize(self, terms: Terms, constant: float = 0.0) -> None:
        self.objective = _collect(terms)
        self.objective_constant = float(constant)

    def fixed(self, values: Mapping[Var, float]) -> "MilpModel":
        """Copy sharing constraints and objective, with the given variables
        pinned to their values."""
        other = MilpModel(f"{self.name}_fixed")
        other.constraints = self.constraints
        other.objective = self.objective
        other.objective_constant = self.objective_constant
        pins = {v.index: float(x) for v, x in values.items()}
        other.variables = [
            replace(v, lb=pins[v.index], ub=pins[v.index]) if v.index in pins else v for v in self.variables
        ]
        other._by_name = {v.name: v for v in other.variables}
        return other

    # -- dense/sparse views -------------------------------------------------

    def arrays(self):
        n = len(self.variables)
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] = v
        rows, cols, vals = [], [], []
        lo = np.empty(len(self.constraints))
        hi = np.empty(len(self.constraints))
        for i, con in enumerate(self.constraints):
            for j, v in con.coefs.items():
                rows.append(i)
                cols.append(j)
                vals.append(v)
            lo[i], hi[i] = con.bounds()
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.constraints), n))
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        integrality = np.array([1 if v.is_integer else 0 for v in self.variables])
        return c, A, lo, hi, lb, ub, integrality

    def evaluate(self, x) -> float:
        return self.objective_constant + sum(v * x[j] for j, v in self.objective.items())

    def violations(self, x, tol: float = FEAS_TOL) -> list[str]:
        bad = []
        for v in self.variables:
            if x[v.index] < v.lb - tol or x[v.index] > v.ub + tol:
                bad.append(f"bound {v.name}")
            elif v.is_integer and abs(x[v.index] - round(x[v.index])) > tol:
                bad.append(f"integrality {v.name}")
        for con in self.constraints:
            lhs = sum(c * x[j] for j, c in con.coefs.items())
            lo, hi = con.bounds()
            if lhs < lo - tol or lhs > hi + tol:
                bad.append(con.name)
        return bad


@dataclass
class Solution:
    model: MilpModel
    status: Status
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int = 0
    backend: str = ""
    values: dict[str, float] = field(init=False, repr=False)

    def __post_init__(self):
        if self.x is not None:
            xs = self.x.copy()
            for v in self.model.variables:
                if v.is_integer:
                    xs[v.index] = round(xs[v.index])
            self.x = xs
            self.values = {v.name: float(xs[v.index]) for v in self.model.variables}
        else:
            self.values = {}

    def __getitem__(self, key: Var | str) -> float:
        if isinstance(key, Var):
            return float(self.x[key.index])
        return self.values[key]

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    @property
    def gap(self) -> float:
        if self.x is None:
            return math.inf
        return abs(self.objective - self.bound) / max(1.0, abs(self.objective))


def solve(
    model: MilpModel,
    *,
    time_limit: float | None = None,
    node_limit: int | None = None,
    backend: str = "highs",
    rel_gap: float = 1e-9,
    start: Iterable[float] | None = None,
) -> Solution:
    """Solve ``model`` to optimality or until a limit is hit.

    Returns a :class:`Solution` whose status is ``OPTIMAL``, ``FEASIBLE``
    (incumbent with a gap), ``INFEASIBLE`` or ``UNKNOWN`` (limit reached
    without an incumbent).

    ``start`` is an optional feasible point handed to the solver as its
    first incumbent, so a limited search never returns anything worse.
    Only the HiGHS backend uses it.

    Raises:
        UnboundedError: the objective is unbounded below.
    """
    if backend == "highs":
        return _solve_highs(model, time_limit, node_limit, rel_gap, start)
    if backend == "bnb":
        return _solve_bnb(model, time_limit, node_limit)
    if backend == "exhaustive":
        return solve_exhaustive(model)
    raise ValueError(f"unknown backend {backend!r}")


def _solve_highs(model, time_limit, node_limit, rel_gap, start) -> Solution:
    c, A, lo, hi, lb, ub, integrality = model.arrays()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", float(rel_gap))
    h.setOptionValue("threads", 1)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    if node_limit is not None:
        h.setOptionValue("mip_max_nodes", int(node_limit))
    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_, lp.num_row_ = len(c), A.shape[0]
    lp.col_cost_ = c
    lp.col_lower_ = np.where(np.isfinite(lb), lb, -inf)
    lp.col_upper_ = np.where(np.isfinite(ub), ub, inf)
    lp.row_lower_ = np.where(np.isfinite(lo), lo, -inf)
    lp.row_upper_ = np.where(np.isfinite(hi), hi, inf)
    csc = A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.num_col_, lp.a_matrix_.num_row_ = len(c), A.shape[0]
    lp.a_matrix_.start_ = csc.indptr
    lp.a_matrix_.index_ = csc.indices
    lp.a_matrix_.value_ = csc.data
    if integrality.any():
        kinds = [highspy.HighsVarType.kContinuous, highspy.HighsVarType.kInteger]
        lp.integrality_ = [kinds[int(t)] for t in integrality]
    h.passModel(lp)
    if start is not None:
        hint = highspy.HighsSolution()
        hint.col_value = [float(v) for v in start]
        hint.value_valid = True
        h.setSolution(hint)
    h.run()
    status = h.getModelStatus()
    ms = highspy.HighsModelStatus
    if status == ms.kUnbounded:
        raise UnboundedError(f"{model.name}: objective unbounded")
    if status == ms.kUnboundedOrInfeasible:
        # presolve could not tell; the LP relaxation decides
        if lp_relaxation(model)[0] == "infeasible":
            return Solution(model, Status.INFEASIBLE, None, math.inf, math.inf, backend="highs")
        raise UnboundedError(f"{model.name}: objective unbounded")
    if status == ms.kInfeasible and integrality.any() and h.getOptionValue("presolve")[1] != "off":
        # presolve has wrongly claimed infeasibility on small feasible models; confirm without it
        h.setOptionValue("presolve", "off")
        h.clearSolver()
        h.run()
        status = h.getModelStatus()
    if status == ms.kInfeasible:
        return Solution(model, Status.INFEASIBLE, None, math.inf, math.inf, backend="highs")
    info = h.getInfo()
    if info.primal_solution_status != 2:  # no feasible point
        return Solution(model, Status.UNKNOWN, None, math.inf, -math.inf, backend="highs")
    x = _polish(model, A, lo, hi, lb, ub, np.asarray(h.getSolution().col_value, dtype=float), integrality)
    obj = float(c @ x) + model.objective_constant
    optimal = status == ms.kOptimal
    if integrality.any():
        bound = float(info.mip_dual_bound) + model.objective_constant
        if not np.isfinite(bound):
            bound = -math.inf
        nodes = int(info.mip_node_count)
    else:
        bound, nodes = obj, 0
    if optimal:
        bound = min(bound, obj)
    return Solution(model, Status.OPTIMAL if optimal else Status.FEASIBLE, x, obj, bound, nodes=nodes, backend="highs")


def _polish(model, A, lo, hi, lb, ub, x, integrality):
    """Round integers and recompute epigraph variables exactly.

    Solver values are only feasible within tolerances, which can leave an
    epigraph variable a little below the cost it stands for. The polished
    point is kept only if it stays feasible.
    """
    is_int = np.asarray(integrality, dtype=bool)
    y = x.copy()
    y[is_int] = np.round(y[is_int])
    cont = np.flatnonzero(~is_int)
    if len(cont) and not _epigraph_rows(model):
        return x
    csc = A.tocsc()
    lhs = A @ y
    for j in cont:
        rows = csc.indices[csc.indptr[j] : csc.indptr[j + 1]]
        a = csc.data[csc.indptr[j] : csc.indptr[j + 1]]
        rest = lhs[rows] - a * y[j]
        side = np.where(a > 0, lo[rows], hi[rows])
        limits = (side - rest) / a
        y[j] = max(lb[j], float(limits.max())) if len(rows) else lb[j]
    lhs = A @ y
    ok = (
        np.all(lhs >= lo - FEAS_TOL)
        and np.all(lhs <= hi + FEAS_TOL)
        and np.all(y >= lb - FEAS_TOL)
        and np.all(y <= ub + FEAS_TOL)
    )
    return y if ok else x


def lp_relaxation(model: MilpModel, lb=None, ub=None):
    """Solve the continuous relaxation; returns ``(status, x, value)``.

    ``status`` is ``"optimal"``, ``"infeasible"`` or ``"unbounded"``.
    """
    c, A, lo, hi, lb0, ub0, _ = model.arrays()
    lb = lb0 if lb is None else lb
    ub = ub0 if ub is None else ub
    return _lp(c, A, lo, hi, lb, ub, model.objective_constant)


def _lp(c, A, lo, hi, lb, ub, const):
    A_ub, b_ub, A_eq, b_eq = _split_rows(A, lo, hi)
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=[(None if np.isinf(l) else l, None if np.isinf(u) else u) for l, u in zip(lb, ub)],
        method="highs",
    )
    if res.status == 2:
        return "infeasible", None, math.inf
    if res.status == 3:
        return "unbounded", None, -math.inf
    if res.status != 0:
        raise RuntimeError(f"LP relaxation failed: {res.message}")
    return "optimal", res.x, float(res.fun) + const


def _split_rows(A, lo, hi):
    eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    up = np.isfinite(hi) & ~eq
    down = np.isfinite(lo) & ~eq
    A = A.tocsr()
    blocks, rhs = [], []
    if up.any():
        blocks.append(A[up])
        rhs.append(hi[up])
    if down.any():
        blocks.append(-A[down])
        rhs.append(-lo[down])
    A_ub = sparse.vstack(blocks).tocsr() if blocks else None
    b_ub = np.concatenate(rhs) if rhs else None
    A_eq = A[eq] if eq.any() else None
    b_eq = lo[eq] if eq.any() else None
    return A_ub, b_ub, A_eq, b_eq


def _improves(value: float, incumbent: float) -> bool:
    if math.isinf(incumbent):
        return True
    return value < incumbent - 1e-9 * max(1.0, abs(incumbent))


def _solve_bnb(model: MilpModel, time_limit, node_limit) -> Solution:
    c, A, lo, hi, lb0, ub0, integrality = model.arrays()
    const = model.objective_constant
    int_idx = np.flatnonzero(integrality)
    start = time.monotonic()

    status, x, value = _lp(c, A, lo, hi, lb0, ub0, const)
    if status == "unbounded":
        raise UnboundedError(f"{model.name}: LP relaxation unbounded")
    if status == "infeasible":
        return Solution(model, Status.INFEASIBLE, None, math.inf, math.inf, backend="bnb")

    best_x, best_obj = None, math.inf
    counter = itertools.count()
    heap = [(value, next(counter), lb0.copy(), ub0.copy(), x)]
    explored = 0
    limited = False
    while heap:
        bound, _, lb, ub, x = heapq.heappop(heap)
        if not _improves(bound, best_obj):
            continue
        if (node_limit is not None and explored >= node_limit) or (
            time_limit is not None and time.monotonic() - start > time_limit
        ):
            heapq.heappush(heap, (bound, next(counter), lb, ub, x))
            limited = True
            break
        explored += 1
        frac = [j for j in int_idx if abs(x[j] - round(x[j])) > INT_TOL]
        if not frac:
            best_x, best_obj = x, bound
            continue
        j = frac[0]
        for new_lb, new_ub in ((lb[j], math.floor(x[j])), (math.ceil(x[j]), ub[j])):
            if new_lb > new_ub:
                continue
            clb, cub = lb.copy(), ub.copy()
            clb[j], cub[j] = new_lb, new_ub
            st, cx, cval = _lp(c, A, lo, hi, clb, cub, const)
            if st == "optimal" and _improves(cval, best_obj):
                heapq.heappush(heap, (cval, next(counter), clb, cub, cx))

    open_bound = min((h[0] for h in heap), default=math.inf)
    if best_x is None:
        if limited:
            return Solution(model, Status.UNKNOWN, None, math.inf, open_bound, explored, "bnb")
        return Solution(model, Status.INFEASIBLE, None, math.inf, math.inf, explored, "bnb")
    bound = min(best_obj, open_bound)
    status = Status.FEASIBLE if limited and best_obj - bound > 1e-6 * max(1.0, abs(best_obj)) else Status.OPTIMAL
    return Solution(model, status, np.asarray(best_x), best_obj, bound, explored, "bnb")


# ---------------------------------------------------------------------------
# Exhaustive enumeration


def _epigraph_rows(model: MilpModel):
    """Check whether every continuous variable can be set in closed form.

    That holds when each constraint touches at most one continuous variable,
    touches it only through an inequality that bounds it from below, and the
    variable has a non-negative objective coefficient.
    """
    cont = {v.index for v in model.variables if not v.is_integer}
    if not cont:
        return True
    for con in model.constraints:
        hits = [j for j in con.coefs if j in cont]
        if not hits:
            continue
        if len(hits) > 1 or con.sense == "==":
            return False
        a = con.coefs[hits[0]]
        if (con.sense == ">=" and a <= 0) or (con.sense == "<=" and a >= 0):
            return False
    return all(model.objective.get(j, 0.0) >= 0 for j in cont)


def solve_exhaustive(model: MilpModel, max_assignments: int = 1 << 22, chunk: int = 1 << 14) -> Solution:
    """Enumerate all integer assignments and return the best feasible one."""
    ints = [v for v in model.variables if v.is_integer]
    domains = [np.arange(int(v.lb), int(v.ub) + 1) for v in ints]
    total = math.prod(len(d) for d in domains) if domains else 1
    if total > max_assignments:
        raise ValueError(f"{total} assignments exceed the exhaustive limit {max_assignments}")
    c, A, lo, hi, lb, ub, integrality = model.arrays()
    A = A.toarray()
    int_idx = np.array([v.index for v in ints], dtype=int)
    cont_idx = np.array([v.index for v in model.variables if not v.is_integer], dtype=int)
    closed = _epigraph_rows(model)

    best_obj, best_x = math.inf, None
    grids = itertools.product(*domains) if domains else iter([()])
    while True:
        block = list(itertools.islice(grids, chunk))
        if not block:
            break
        X = np.zeros((len(block), len(model.variables)))
        if len(int_idx):
            X[:, int_idx] = np.array(block, dtype=float)
        if len(cont_idx) and closed:
            X, ok = _fill_epigraph(model, A, lo, hi, lb, ub, X, int_idx, cont_idx)
        elif len(cont_idx):
            ok = np.zeros(len(block), dtype=bool)
            for r in range(len(block)):
                ok[r] = _fill_lp(model, A, lo, hi, lb, ub, X[r], int_idx, cont_idx)
        else:
            ok = np.ones(len(block), dtype=bool)
        lhs = X @ A.T if A.shape[0] else np.zeros((len(block), 0))
        ok &= np.all(lhs >= lo - FEAS_TOL, axis=1) & np.all(lhs <= hi + FEAS_TOL, axis=1)
        if not ok.any():
            continue
        obj = X @ c + model.objective_constant
        obj[~ok] = np.inf
        r = int(np.argmin(obj))
        if obj[r] < best_obj - 1e-12:
            best_obj, best_x = float(obj[r]), X[r].copy()
    if best_x is None:
        return Solution(model, Status.INFEASIBLE, None, math.inf, math.inf, total, "exhaustive")
    return Solution(model, Status.OPTIMAL, best_x, best_obj, best_obj, total, "exhaustive")


def _fill_epigraph(model, A, lo, hi, lb, ub, X, int_idx, cont_idx):
    X = X.copy()
    ok = np.ones(len(X), dtype=bool)
    for j in cont_idx:
        val = np.full(len(X), lb[j])
        for i, con in enumerate(model.constraints):
            a = con.coefs.get(j)
            if a is None:
                continue
            rest = X @ A[i] - a * X[:, j]
            # a*x_j + rest >= lo  or  a*x_j + rest <= hi with a < 0
            limit = (lo[i] - rest) / a if con.sense == ">=" else (hi[i] - rest) / a
            val = np.maximum(val, limit)
        ok &= val <= ub[j] + FEAS_TOL
        X[:, j] = val
    return X, ok


def _fill_lp(model, A, lo, hi, lb, ub, x, int_idx, cont_idx) -> bool:
    fixed = x[int_idx]
    shift_lo = lo - A[:, int_idx] @ fixed
    shift_hi = hi - A[:, int_idx] @ fixed
    c = np.array([model.objective.get(int(j), 0.0) for j in cont_idx])
    status, xc, _ = _lp(c, sparse.csr_matrix(A[:, cont_idx]), shift_lo, shift_hi, lb[cont_idx], ub[cont_idx], 0.0)
    if status == "unbounded":
        raise UnboundedError(f"{model.name}: continuous part unbounded")
    if status != "optimal":
        return False
    x[cont_idx] = xc
    return True


# ---------------------------------------------------------------------------
# LP text export


def to_lp_format(model: MilpModel) -> str:
    """Write ``model`` in CPLEX LP text format for cross-checking elsewhere."""
    names = [_lp_name(v.name) for v in model.variables]

    def expr(coefs: Mapping[int, float]) -> str:
        if not coefs:
            return "0 " + names[0] if names else "0"
        parts = []
        for j, a in sorted(coefs.items()):
            sign = "-" if a < 0 else "+"
            parts.append(f"{sign} {abs(a):.12g} {names[j]}")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else text

    lines = [f"\\ {model.name}", "Minimize", f" obj: {expr(model.objective)}", "Subject To"]
    for con in model.constraints:
        op = {"<=": "<=", ">=": ">=", "==": "="}[con.sense]
        lines.append(f" {_lp_name(con.name)}: {expr(con.coefs)} {op} {con.rhs:.12g}")
    lines.append("Bounds")
    for v, n in zip(model.variables, names):
        if v.vtype is VarType.BINARY:
            continue
        upper = "+inf" if math.isinf(v.ub) else f"{v.ub:.12g}"
        lines.append(f" {v.lb:.12g} <= {n} <= {upper}")
    gen = [n for v, n in zip(model.variables, names) if v.vtype is VarType.INTEGER]
    bins = [n for v, n in zip(model.variables, names) if v.vtype is VarType.BINARY]
    if gen:
        lines += ["General", " " + " ".join(gen)]
    if bins:
        lines += ["Binary", " " + " ".join(bins)]
    lines.append("End")
    return "\n".join(lines) + "\n"


def _lp_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_.[]" else "_" for ch in name)
