"""Independent oracles shared by the unit and acceptance suites.

Everything here recomputes expected values from first principles
(enumeration, brute force) and never calls the code paths it checks.
"""

import itertools
import math

import numpy as np

from pdsr.milp import EQ, GE, LE, MixedBinaryModel, solve_lp


def random_lp(rng, n_vars=None, n_rows=None):
    """Random bounded LP, feasible by construction (interior point trick)."""
    n = n_vars or int(rng.integers(2, 7))
    rows = n_rows if n_rows is not None else int(rng.integers(1, 7))
    m = MixedBinaryModel()
    lo = rng.uniform(-3.0, 0.0, n)
    hi = lo + rng.uniform(0.5, 4.0, n)
    xs = [m.add_var(f"x{j}", lo[j], hi[j]) for j in range(n)]
    x0 = rng.uniform(lo, hi)
    for j, c in enumerate(rng.normal(size=n)):
        m.add_objective(xs[j], float(c))
    for _ in range(rows):
        nz = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        coeffs = {xs[j]: float(rng.normal()) for j in nz}
        act = sum(a * x0[j] for j, a in zip(nz, coeffs.values()))
        kind = rng.integers(0, 3)
        if kind == 0:
            m.add_constraint(coeffs, LE, act + float(rng.uniform(0.05, 1.0)))
        elif kind == 1:
            m.add_constraint(coeffs, GE, act - float(rng.uniform(0.05, 1.0)))
        else:
            m.add_constraint(coeffs, EQ, act)
    return m


def enumerate_vertices_optimum(model):
    """Best objective over all basic feasible points: every n-subset of
    hyperplanes (rows as equalities plus bound faces) solved and checked."""
    n = model.num_vars
    planes = []
    for coeffs, rel, rhs in model.rows:
        row = np.zeros(n)
        for j, a in coeffs.items():
            row[j] = a
        planes.append((row, rhs))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if math.isfinite(model.lb[j]):
            planes.append((e.copy(), model.lb[j]))
        if math.isfinite(model.ub[j]):
            planes.append((e.copy(), model.ub[j]))
    c = np.zeros(n)
    for j, a in model.obj.items():
        c[j] = a
    best = math.inf
    for subset in itertools.combinations(range(len(planes)), n):
        A = np.array([planes[k][0] for k in subset])
        b = np.array([planes[k][1] for k in subset])
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        if model.max_violation(x) > 1e-8:
            continue
        best = min(best, float(c @ x) + model.obj_const)
    return best


def random_milp(rng, max_binaries=12, max_cont=8):
    """Random mixed-binary model with a guaranteed feasible assignment."""
    nb = int(rng.integers(1, max_binaries + 1))
    nc = int(rng.integers(0, max_cont + 1))
    m = MixedBinaryModel()
    bs = [m.add_var(f"b{j}", 0.0, 1.0, binary=True) for j in range(nb)]
    lo = rng.uniform(-2.0, 0.0, nc)
    hi = lo + rng.uniform(0.5, 3.0, nc)
    xs = [m.add_var(f"x{j}", lo[j], hi[j]) for j in range(nc)]
    for v in bs + xs:
        m.add_objective(v, float(rng.normal()))
    b0 = rng.integers(0, 2, nb).astype(float)
    x0 = rng.uniform(lo, hi) if nc else np.zeros(0)
    point = np.concatenate([b0, x0])
    handles = bs + xs
    for _ in range(int(rng.integers(1, 9))):
        nz = rng.choice(len(handles), size=int(rng.integers(1, len(handles) + 1)),
                        replace=False)
        coeffs = {handles[k]: float(rng.normal()) for k in nz}
        act = sum(a * point[k] for k, a in zip(nz, coeffs.values()))
        if rng.integers(0, 2):
            m.add_constraint(coeffs, LE, act + float(rng.uniform(0.05, 1.0)))
        else:
            m.add_constraint(coeffs, GE, act - float(rng.uniform(0.05, 1.0)))
    return m, bs


def brute_force_milp(model, binaries):
    """Enumerate all binary assignments; LP per fixing; keep the best."""
    best = math.inf
    lb_save = list(model.lb)
    ub_save = list(model.ub)
    for assignment in itertools.product((0.0, 1.0), repeat=len(binaries)):
        for j, v in zip(binaries, assignment):
            model.lb[j] = model.ub[j] = v
        model._cache = None
        sol = solve_lp(model)
        if sol.status == "optimal":
            best = min(best, sol.objective)
    model.lb[:] = lb_save
    model.ub[:] = ub_save
    model._cache = None
    return best


def enumerate_clustering(d, gamma, beta=None, fixed_k=None):
    """Exhaustive clustering optimum: every representative set, members
    assigned to their cheapest representative."""
    n = len(gamma)
    best = np.inf
    for r in range(1, n + 1):
        if fixed_k is not None and r != fixed_k:
            continue
        for reps in itertools.combinations(range(n), r):
            cost = sum(gamma[i] * min(d[i, j] for j in reps) for i in range(n))
            if beta is not None:
                cost += beta * r / n
            best = min(best, cost)
    return best
