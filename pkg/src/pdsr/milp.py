"""Mixed-binary linear models and an exact, deterministic solver for them.

Every stochastic program in the toolkit compiles down to a
:class:`MixedBinaryModel`: bounded variables (some binary), a sparse linear
objective to minimize, and sparse linear rows.  LP relaxations are solved
with HiGHS dual simplex (vertex solutions, single-threaded, deterministic),
and binaries are resolved by a best-first branch-and-bound that proves a
relative gap before declaring optimality.

Determinism contract: two solves of the same model produce identical
variable values.  Branching is most-fractional with ties broken by lowest
variable index; the node queue is ordered by (bound, creation order).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from heapq import heappop, heappush

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog
from scipy.optimize import milp as highs_milp

from .errors import ModelError, SolverError

LE, EQ, GE = "<=", "=", ">="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
GAP_LIMIT = "gap_limit"

DEFAULT_GAP_TOL = 1e-4

# |x - round(x)| below this counts as integral.
_INT_TOL = 1e-6
# Activity above this level forces a gating binary during repair.
_ACTIVE_TOL = 1e-7


class LinExpr:
    """Sparse linear expression with a constant term.

    Used by the problem compilers so that a first-stage quantity can be
    either a model variable or a substituted constant without the calling
    code branching on the mode.
    """

    __slots__ = ("coeffs", "const")

    def __init__(self):
        self.coeffs: dict[int, float] = {}
        self.const = 0.0

    def add(self, handle, coef: float) -> "LinExpr":
        """Add ``coef * handle`` where handle is a variable index or a
        ``("const", value)`` pair."""
        if isinstance(handle, tuple):
            self.const += coef * handle[1]
        else:
            self.coeffs[handle] = self.coeffs.get(handle, 0.0) + coef
        return self

    def add_const(self, value: float) -> "LinExpr":
        self.const += value
        return self


class MixedBinaryModel:
    """A minimize-sense mixed-binary linear program.

    Models are append-only while being built and must not be mutated once a
    solve has started; solves on distinct instances may run concurrently.
    """

    def __init__(self):
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_binary: list[bool] = []
        self.obj: dict[int, float] = {}
        self.obj_const = 0.0
        # Named objective slices (e.g. penalty cost) for reporting.
        self.obj_groups: dict[str, dict[int, float]] = {}
        self.obj_group_consts: dict[str, float] = {}
        self.rows: list[tuple[dict[int, float], str, float]] = []
        # (binary, active-when-0 var, active-when-1 var) triples used by the
        # incumbent repair heuristic; populated by the problem compilers.
        self.gating: list[tuple[int, int, int]] = []
        self._cache = None

    # -- construction -----------------------------------------------------

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                binary: bool = False) -> int:
        if binary and (lb < 0.0 or ub > 1.0):
            raise ModelError(f"binary variable {name!r} must have bounds within [0, 1]")
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb > ub")
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.is_binary.append(bool(binary))
        self._cache = None
        return len(self.var_names) - 1

    def add_constraint(self, coeffs: dict[int, float], relation: str, rhs: float):
        if relation not in (LE, EQ, GE):
            raise ModelError(f"unknown relation {relation!r}")
        if not coeffs:
            raise ModelError("constraint references no variables")
        n = len(self.var_names)
        for j, a in coeffs.items():
            if not 0 <= j < n:
                raise ModelError(f"constraint references undeclared variable {j}")
            if not math.isfinite(a):
                raise ModelError("non-finite constraint coefficient")
        if not math.isfinite(rhs):
            raise ModelError("non-finite right-hand side")
        self.rows.append((dict(coeffs), relation, float(rhs)))
        self._cache = None

    def add_expr_constraint(self, expr: LinExpr, relation: str, rhs: float):
        """Add ``expr <relation> rhs``; the expression constant moves to the
        right-hand side.  Rows whose variables all dropped out (fully fixed
        first stage) are checked for consistency and skipped."""
        coeffs = {j: a for j, a in expr.coeffs.items() if a != 0.0}
        resid = rhs - expr.const
        if not coeffs:
            ok = {LE: resid >= -1e-6, GE: resid <= 1e-6, EQ: abs(resid) <= 1e-6}[relation]
            if not ok:
                raise ModelError(
                    f"constant constraint violated: 0 {relation} {resid:g}")
            return
        self.rows.append((coeffs, relation, float(resid)))
        self._cache = None

    def add_objective(self, handle, coef: float, group: str | None = None):
        """Accumulate ``coef * handle`` into the objective (and a group)."""
        if isinstance(handle, tuple):
            self.obj_const += coef * handle[1]
            if group:
                self.obj_group_consts[group] = (
                    self.obj_group_consts.get(group, 0.0) + coef * handle[1])
            return
        self.obj[handle] = self.obj.get(handle, 0.0) + coef
        if group:
            g = self.obj_groups.setdefault(group, {})
            g[handle] = g.get(handle, 0.0) + coef
        self._cache = None

    # -- inspection --------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def binary_indices(self) -> list[int]:
        return [j for j, b in enumerate(self.is_binary) if b]

    def index_of(self, name: str) -> int:
        try:
            return self.var_names.index(name)
        except ValueError:
            raise ModelError(f"no variable named {name!r}") from None

    def objective_value(self, x: np.ndarray) -> float:
        return sum(a * x[j] for j, a in self.obj.items()) + self.obj_const

    def group_value(self, group: str, x: np.ndarray) -> float:
        total = self.obj_group_consts.get(group, 0.0)
        for j, a in self.obj_groups.get(group, {}).items():
            total += a * x[j]
        return total

    def validate(self):
        for j, (lo, hi, b) in enumerate(zip(self.lb, self.ub, self.is_binary)):
            if not (math.isfinite(lo) or lo == -math.inf):
                raise ModelError(f"bad lower bound on {self.var_names[j]!r}")
            if b and (lo < 0.0 or hi > 1.0):
                raise ModelError(f"binary {self.var_names[j]!r} out of [0, 1]")
        for j, a in self.obj.items():
            if not math.isfinite(a):
                raise ModelError("non-finite objective coefficient")

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint violation of ``x`` (equalities two-sided)."""
        worst = 0.0
        for coeffs, rel, rhs in self.rows:
            lhs = sum(a * x[j] for j, a in coeffs.items())
            if rel == LE:
                worst = max(worst, lhs - rhs)
            elif rel == GE:
                worst = max(worst, rhs - lhs)
            else:
                worst = max(worst, abs(lhs - rhs))
        for j in range(self.num_vars):
            worst = max(worst, self.lb[j] - x[j], x[j] - self.ub[j])
        return worst

    # -- solver-facing arrays ----------------------------------------------

    def _arrays(self):
        """Build (and cache) the sparse row matrices used by linprog."""
        if self._cache is not None:
            return self._cache
        n = self.num_vars
        c = np.zeros(n)
        for j, a in self.obj.items():
            c[j] = a
        ub_r, ub_c, ub_v, ub_b = [], [], [], []
        eq_r, eq_c, eq_v, eq_b = [], [], [], []
        for coeffs, rel, rhs in self.rows:
            if rel == EQ:
                r, cc, vv, bb = eq_r, eq_c, eq_v, eq_b
                sign = 1.0
            else:
                r, cc, vv, bb = ub_r, ub_c, ub_v, ub_b
                sign = 1.0 if rel == LE else -1.0
            i = len(bb)
            for j, a in coeffs.items():
                r.append(i)
                cc.append(j)
                vv.append(sign * a)
            bb.append(sign * rhs)
        A_ub = (sparse.csr_matrix((ub_v, (ub_r, ub_c)), shape=(len(ub_b), n))
                if ub_b else None)
        A_eq = (sparse.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_b), n))
                if eq_b else None)
        self._cache = (c, A_ub, np.array(ub_b), A_eq, np.array(eq_b))
        return self._cache

    def _row_ranges(self):
        """Single constraint matrix with [lower, upper] row activities."""
        n = self.num_vars
        rr, cc, vv, lo, hi = [], [], [], [], []
        for i, (coeffs, rel, rhs) in enumerate(self.rows):
            for j, a in coeffs.items():
                rr.append(i)
                cc.append(j)
                vv.append(a)
            if rel == LE:
                lo.append(-math.inf)
                hi.append(rhs)
            elif rel == GE:
                lo.append(rhs)
                hi.append(math.inf)
            else:
                lo.append(rhs)
                hi.append(rhs)
        A = sparse.csr_matrix((vv, (rr, cc)), shape=(len(self.rows), n))
        return A, np.array(lo), np.array(hi)


@dataclass
class Solution:
    """Outcome of an LP or MILP solve."""

    status: str
    objective: float
    x: np.ndarray | None
    mip_gap: float = 0.0
    node_count: int = 0
    dual_objective: float | None = None
    # (node index, incumbent objective, global lower bound) at each
    # improvement event; incumbents are non-increasing, bounds non-decreasing.
    trace: list = field(default_factory=list)


def _dual_objective(res, b_ub, b_eq, lo, hi) -> float | None:
    """Reconstruct the dual objective from HiGHS marginals (weak-duality
    spot checks); None when any piece is unavailable."""
    try:
        total = 0.0
        if b_ub is not None and len(b_ub):
            total += float(np.dot(b_ub, res.ineqlin.marginals))
        if b_eq is not None and len(b_eq):
            total += float(np.dot(b_eq, res.eqlin.marginals))
        lom = np.asarray(res.lower.marginals)
        him = np.asarray(res.upper.marginals)
        finite_lo = np.where(np.isfinite(lo), lo, 0.0)
        finite_hi = np.where(np.isfinite(hi), hi, 0.0)
        total += float(np.dot(finite_lo, np.where(lom != 0.0, lom, 0.0)))
        total += float(np.dot(finite_hi, np.where(him != 0.0, him, 0.0)))
        return total
    except (AttributeError, TypeError):
        return None


def _solve_relaxation(model: MixedBinaryModel, lo: np.ndarray, hi: np.ndarray,
                      want_duals: bool = False):
    """Solve the LP relaxation at the given bounds.

    Returns (status, objective-without-constant, x, dual_objective).
    """
    c, A_ub, b_ub, A_eq, b_eq = model._arrays()
    res = linprog(c, A_ub=A_ub, b_ub=b_ub if A_ub is not None else None,
                  A_eq=A_eq, b_eq=b_eq if A_eq is not None else None,
                  bounds=np.column_stack([lo, hi]), method="highs-ds")
    if res.status == 0:
        dual = _dual_objective(res, b_ub if A_ub is not None else None,
                               b_eq if A_eq is not None else None,
                               lo, hi) if want_duals else None
        return OPTIMAL, float(res.fun), np.asarray(res.x), dual
    if res.status == 2:
        return INFEASIBLE, math.inf, None, None
    if res.status == 3:
        return UNBOUNDED, -math.inf, None, None
    raise SolverError(f"LP solve failed (HiGHS status {res.status}): {res.message}")


def solve_lp(model: MixedBinaryModel) -> Solution:
    """Solve the LP relaxation of ``model`` (binaries relaxed to [0, 1]).

    Returns a vertex-optimal solution, or a Solution carrying an
    infeasible/unbounded status.  Deterministic for identical input.
    """
    model.validate()
    lo = np.array(model.lb)
    hi = np.array(model.ub)
    status, fun, x, dual = _solve_relaxation(model, lo, hi, want_duals=True)
    if status != OPTIMAL:
        return Solution(status, math.inf if status == INFEASIBLE else -math.inf,
                        None, node_count=1)
    return Solution(OPTIMAL, fun + model.obj_const, x, node_count=1,
                    dual_objective=(None if dual is None
                                    else dual + model.obj_const))


def _gating_repair(model: MixedBinaryModel, x: np.ndarray) -> dict[int, int]:
    """Propose integral values for every binary given a relaxation point.

    Gating binaries are set from their active side (the larger activity wins
    when the relaxation violates complementarity); everything else rounds.
    """
    fix = {}
    for d, when0, when1 in model.gating:
        a0, a1 = x[when0], x[when1]
        if a1 > _ACTIVE_TOL and a1 >= a0:
            fix[d] = 1
        elif a0 > _ACTIVE_TOL:
            fix[d] = 0
        else:
            fix[d] = int(round(x[d]))
    for j in model.binary_indices:
        if j not in fix:
            fix[j] = int(round(x[j]))
    return fix


def solve_milp(model: MixedBinaryModel, gap_tol: float = DEFAULT_GAP_TOL,
               time_limit: float | None = None) -> Solution:
    """Exactly solve the mixed-binary model to a proven relative gap.

    Runs HiGHS branch-and-bound single-threaded (deterministic: identical
    input gives identical variable values).  On ``time_limit`` the best
    incumbent is returned with status ``gap_limit``.  The pure-Python
    reference algorithm :func:`solve_milp_reference` implements the same
    contract and is cross-checked against this routine in the test suite.
    """
    model.validate()
    if gap_tol < 0:
        raise ModelError("gap_tol must be >= 0")
    n = model.num_vars
    c = np.zeros(n)
    for j, a in model.obj.items():
        c[j] = a
    integrality = np.array(model.is_binary, dtype=int)
    constraints = None
    if model.rows:
        A, lo, hi = model._row_ranges()
        constraints = LinearConstraint(A, lo, hi)
    options = {"mip_rel_gap": gap_tol, "presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = highs_milp(c, constraints=constraints, integrality=integrality,
                     bounds=Bounds(np.array(model.lb), np.array(model.ub)),
                     options=options)
    nodes = max(1, int(getattr(res, "mip_node_count", 0) or 0))
    if res.status == 0:
        x = np.asarray(res.x)
        viol = model.max_violation(x)
        if viol > 1e-5:
            raise SolverError(f"solution violates constraints by {viol:.3e}")
        gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
        return Solution(OPTIMAL, float(res.fun) + model.obj_const, x,
                        mip_gap=gap, node_count=nodes)
    if res.status == 2:
        return Solution(INFEASIBLE, math.inf, None, node_count=nodes)
    if res.status == 3:
        return Solution(UNBOUNDED, -math.inf, None, node_count=nodes)
    if res.status == 1:  # time/iteration limit; carry the incumbent if any
        x = np.asarray(res.x) if res.x is not None else None
        obj = float(res.fun) + model.obj_const if x is not None else math.inf
        gap = float(getattr(res, "mip_gap", math.inf) or math.inf)
        return Solution(GAP_LIMIT, obj, x, mip_gap=gap, node_count=nodes)
    raise SolverError(f"MILP solve failed (HiGHS status {res.status}): {res.message}")


def solve_milp_reference(model: MixedBinaryModel, gap_tol: float = DEFAULT_GAP_TOL,
                         time_limit: float | None = None,
                         heuristic=None) -> Solution:
    """Best-first branch-and-bound over LP relaxations.

    Returns the incumbent once its relative gap to the best open bound is
    proven <= ``gap_tol``; on ``time_limit`` the best incumbent is returned
    with status ``gap_limit``.  Branching picks the most-fractional binary,
    ties broken by lowest variable index; the node queue is ordered by
    (parent bound, creation order).

    ``heuristic(x)`` may propose a full binary fixing from a relaxation
    point; the default repairs the model's gating pairs and rounds the rest.
    """
    model.validate()
    if gap_tol < 0:
        raise ModelError("gap_tol must be >= 0")
    t0 = time.monotonic()
    binaries = np.array(model.binary_indices, dtype=int)
    lo0 = np.array(model.lb)
    hi0 = np.array(model.ub)

    status, fun, x, _ = _solve_relaxation(model, lo0, hi0)
    nodes = 1
    if status != OPTIMAL:
        return Solution(status, math.inf if status == INFEASIBLE else -math.inf,
                        None, node_count=nodes)
    if binaries.size == 0:
        return Solution(OPTIMAL, fun + model.obj_const, x, node_count=nodes)

    if heuristic is None:
        heuristic = lambda xr: _gating_repair(model, xr)

    inc_x = None
    inc_obj = math.inf
    const = model.obj_const
    trace: list[tuple[int, float, float]] = []

    def relative_gap(bound: float) -> float:
        if inc_x is None:
            return math.inf
        return (inc_obj - bound) / max(abs(inc_obj), 1e-10)

    def fractional(xr: np.ndarray):
        f = np.abs(xr[binaries] - np.round(xr[binaries]))
        k = int(np.argmax(f))
        return (int(binaries[k]), float(f[k]))

    def bounds_for(fixings: dict[int, float]):
        lo, hi = lo0.copy(), hi0.copy()
        for j, v in fixings.items():
            lo[j] = hi[j] = v
        return lo, hi

    def try_incumbent(xr: np.ndarray, obj: float, lower: float) -> None:
        nonlocal inc_x, inc_obj
        if obj < inc_obj - 1e-12:
            inc_x, inc_obj = xr, obj
            trace.append((nodes, obj + const, lower + const))

    def run_heuristic(xr: np.ndarray, lower: float):
        nonlocal nodes
        fixing = heuristic(xr)
        if fixing is None:
            return
        hlo, hhi = bounds_for({j: float(v) for j, v in fixing.items()})
        st, f, hx, _ = _solve_relaxation(model, hlo, hhi)
        nodes += 1
        if st == OPTIMAL:
            try_incumbent(hx, f, lower)

    frac_j, frac = fractional(x)
    if frac <= _INT_TOL:
        return Solution(OPTIMAL, fun + const, x, node_count=nodes)
    run_heuristic(x, fun)

    # heap entries: (bound, insertion counter, binary fixings, branch var);
    # only the small fixings dict is retained per open node.
    counter = 0
    heap = [(fun, counter, {}, frac_j)]

    while heap:
        lower = heap[0][0]
        if relative_gap(lower) <= gap_tol:
            break
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            return Solution(GAP_LIMIT,
                            inc_obj + const if inc_x is not None else math.inf,
                            inc_x, mip_gap=relative_gap(lower),
                            node_count=nodes, trace=trace)
        bound, _, fixings, branch_j = heappop(heap)
        if inc_x is not None and bound >= inc_obj - 1e-12:
            continue
        for value in (0.0, 1.0):
            child = dict(fixings)
            child[branch_j] = value
            clo, chi = bounds_for(child)
            st, f, cx, _ = _solve_relaxation(model, clo, chi)
            nodes += 1
            if st != OPTIMAL:
                continue
            if inc_x is not None and f >= inc_obj - 1e-12:
                continue
            cj, cf = fractional(cx)
            if cf <= _INT_TOL:
                try_incumbent(cx, f, lower)
            else:
                counter += 1
                heappush(heap, (f, counter, child, cj))

    if inc_x is None:
        return Solution(INFEASIBLE, math.inf, None, node_count=nodes, trace=trace)
    final_lower = heap[0][0] if heap else inc_obj
    viol = model.max_violation(inc_x)
    if viol > 1e-5:
        raise SolverError(f"incumbent violates constraints by {viol:.3e}")
    return Solution(OPTIMAL, inc_obj + const, inc_x,
                    mip_gap=max(0.0, relative_gap(final_lower)),
                    node_count=nodes, trace=trace)


# -- LP-file export ---------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def _term_string(coeffs: dict[int, float], names: list[str], const: float = 0.0) -> str:
    parts = []
    for j in sorted(coeffs):
        a = coeffs[j]
        if a == 0.0:
            continue
        if not parts:
            parts.append(f"{_fmt(a)} {names[j]}")
        elif a < 0:
            parts.append(f"- {_fmt(-a)} {names[j]}")
        else:
            parts.append(f"+ {_fmt(a)} {names[j]}")
    if const or not parts:
        if not parts:
            parts.append(_fmt(const))
        elif const < 0:
            parts.append(f"- {_fmt(-const)}")
        else:
            parts.append(f"+ {_fmt(const)}")
    return " ".join(parts)


def export_lp_file(model: MixedBinaryModel, path):
    """Write ``model`` in the textual CPLEX-LP format.

    Sections: Minimize / Subject To / Bounds / Binaries (if any) / End.
    Variable names are taken from the model and are stable across runs.
    """
    model.validate()
    lines = ["Minimize", f" obj: {_term_string(model.obj, model.var_names, model.obj_const)}",
             "Subject To"]
    for i, (coeffs, rel, rhs) in enumerate(model.rows):
        op = {LE: "<=", EQ: "=", GE: ">="}[rel]
        lines.append(f" c{i}: {_term_string(coeffs, model.var_names)} {op} {_fmt(rhs)}")
    lines.append("Bounds")
    for j, name in enumerate(model.var_names):
        lo, hi = model.lb[j], model.ub[j]
        if lo == -math.inf and hi == math.inf:
            lines.append(f" {name} free")
        elif hi == math.inf:
            lines.append(f" {name} >= {_fmt(lo)}")
        elif lo == -math.inf:
            lines.append(f" {name} <= {_fmt(hi)}")
        else:
            lines.append(f" {_fmt(lo)} <= {name} <= {_fmt(hi)}")
    if any(model.is_binary):
        lines.append("Binaries")
        for j, name in enumerate(model.var_names):
            if model.is_binary[j]:
                lines.append(f" {name}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
