"""Solver backend: trivial cases, oracle cross-checks, LP-file round trip."""

import itertools
import math

import numpy as np
import pytest

from pdsr.errors import ModelError
from pdsr.milp import (GE, LE, EQ, MixedBinaryModel, export_lp_file, solve_lp,
                       solve_milp, solve_milp_reference)
from oracles import (brute_force_milp, enumerate_vertices_optimum, random_lp,
                     random_milp)


def simple_model():
    m = MixedBinaryModel()
    x = m.add_var("x", 0.0, 10.0)
    m.add_objective(x, 1.0)
    m.add_constraint({x: 1.0}, GE, 3.0)
    return m, x


def test_lp_single_variable():
    m, _ = simple_model()
    sol = solve_lp(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3.0, abs=1e-9)
    assert sol.x[0] == pytest.approx(3.0, abs=1e-9)


def test_lp_symmetric_vertex():
    m = MixedBinaryModel()
    x = m.add_var("x", 0.0, math.inf)
    y = m.add_var("y", 0.0, math.inf)
    m.add_objective(x, -1.0)
    m.add_objective(y, -1.0)
    m.add_constraint({x: 1.0, y: 1.0}, LE, 1.0)
    sol = solve_lp(m)
    assert sol.objective == pytest.approx(-1.0, abs=1e-9)


def test_lp_statuses():
    m = MixedBinaryModel()
    x = m.add_var("x", 0.0, math.inf)
    m.add_objective(x, -1.0)
    assert solve_lp(m).status == "unbounded"
    m2 = MixedBinaryModel()
    x = m2.add_var("x", 0.0, 1.0)
    m2.add_constraint({x: 1.0}, GE, 2.0)
    assert solve_lp(m2).status == "infeasible"


def test_model_validation():
    m = MixedBinaryModel()
    with pytest.raises(ModelError):
        m.add_var("b", -0.5, 1.0, binary=True)
    x = m.add_var("x", 0.0, 1.0)
    with pytest.raises(ModelError):
        m.add_constraint({x + 7: 1.0}, LE, 1.0)
    with pytest.raises(ModelError):
        m.add_constraint({}, LE, 0.0)
    with pytest.raises(ModelError):
        m.add_constraint({x: math.nan}, LE, 0.0)




def test_lp_vs_vertex_enumeration():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(40):
        model = random_lp(rng)
        sol = solve_lp(model)
        if sol.status != "optimal":
            continue
        expected = enumerate_vertices_optimum(model)
        assert expected < math.inf
        assert sol.objective == pytest.approx(expected, abs=1e-7, rel=1e-7)
        checked += 1
        if checked >= 20:
            break
    assert checked >= 20


def test_weak_duality():
    rng = np.random.default_rng(3)
    for _ in range(10):
        model = random_lp(rng)
        sol = solve_lp(model)
        if sol.status != "optimal" or sol.dual_objective is None:
            continue
        assert sol.dual_objective <= sol.objective + 1e-6
        assert sol.dual_objective == pytest.approx(sol.objective, abs=1e-6,
                                                   rel=1e-6)




@pytest.mark.parametrize("solver", [solve_milp, solve_milp_reference],
                         ids=["highs", "reference"])
def test_milp_trivial(solver):
    m = MixedBinaryModel()
    b = m.add_var("b", 0.0, 1.0, binary=True)
    m.add_objective(b, -1.0)
    sol = solver(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-1.0, abs=1e-9)
    assert sol.x[b] == pytest.approx(1.0, abs=1e-6)


def test_integral_relaxation_single_node():
    # totally unimodular: assignment-like rows keep the relaxation integral
    m = MixedBinaryModel()
    b1 = m.add_var("b1", 0.0, 1.0, binary=True)
    b2 = m.add_var("b2", 0.0, 1.0, binary=True)
    m.add_objective(b1, 1.0)
    m.add_objective(b2, 2.0)
    m.add_constraint({b1: 1.0, b2: 1.0}, EQ, 1.0)
    lp = solve_lp(m)
    sol = solve_milp_reference(m)
    assert sol.node_count == 1
    assert sol.objective == pytest.approx(lp.objective, abs=1e-9)
    assert solve_milp(m).objective == pytest.approx(lp.objective, abs=1e-7)


@pytest.mark.parametrize("solver", [solve_milp, solve_milp_reference],
                         ids=["highs", "reference"])
def test_milp_vs_brute_force(solver):
    rng = np.random.default_rng(11)
    for _ in range(20):
        model, bs = random_milp(rng)
        sol = solver(model, gap_tol=1e-6)
        expected = brute_force_milp(model, bs)
        if expected == math.inf:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(expected, abs=1e-6, rel=1e-6)


def test_reference_trace_monotone():
    rng = np.random.default_rng(5)
    seen_branching = 0
    for _ in range(12):
        model, _ = random_milp(rng, max_binaries=10, max_cont=4)
        sol = solve_milp_reference(model, gap_tol=1e-9)
        if sol.status != "optimal":
            continue
        incumbents = [inc for _, inc, _ in sol.trace]
        assert all(b <= a + 1e-9 for a, b in zip(incumbents, incumbents[1:]))
        bounds = [lb for _, _, lb in sol.trace if not math.isnan(lb)]
        assert all(b >= a - 1e-9 for a, b in zip(bounds, bounds[1:]))
        if sol.node_count > 2:
            seen_branching += 1
    assert seen_branching >= 3


def test_determinism():
    rng = np.random.default_rng(2)
    model, _ = random_milp(rng)
    s1 = solve_milp(model)
    s2 = solve_milp(model)
    assert np.array_equal(s1.x, s2.x)
    r1 = solve_milp_reference(model)
    r2 = solve_milp_reference(model)
    assert np.array_equal(r1.x, r2.x)


def test_time_limit_returns_gap_limit():
    # a model large enough that 0 seconds cannot prove optimality
    rng = np.random.default_rng(9)
    model, _ = random_milp(rng, max_binaries=12, max_cont=8)
    sol = solve_milp_reference(model, gap_tol=0.0, time_limit=0.0)
    assert sol.status in ("gap_limit", "optimal", "infeasible")


# -- LP-file export ---------------------------------------------------------


def parse_lp_file(path):
    """Independent minimal reader for the exported subset of the LP format.

    Returns (objective dict by name, constant, rows, bounds, binaries).
    """
    sections = {"minimize": [], "subject to": [], "bounds": [], "binaries": []}
    current = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            low = line.lower()
            if low in ("minimize", "subject to", "bounds", "binaries", "end"):
                current = None if low == "end" else low
                continue
            sections[current].append(line)

    def parse_terms(text):
        # the exported grammar always writes explicit coefficients:
        # "c name" pairs joined by +/- sign tokens, optional bare constant
        toks = text.split()
        coeffs, const, sign, i = {}, 0.0, 1.0, 0
        while i < len(toks):
            tok = toks[i]
            if tok in ("+", "-"):
                sign = 1.0 if tok == "+" else -1.0
                i += 1
                continue
            value = float(tok)
            if i + 1 < len(toks) and toks[i + 1] not in ("+", "-"):
                name = toks[i + 1]
                coeffs[name] = coeffs.get(name, 0.0) + sign * value
                i += 2
            else:
                const += sign * value
                i += 1
            sign = 1.0
        return coeffs, const

    obj_text = " ".join(sections["minimize"])
    assert obj_text.startswith("obj:")
    obj, const = parse_terms(obj_text[4:])
    rows = []
    for line in sections["subject to"]:
        _, body = line.split(":", 1)
        for op in ("<=", ">=", "="):
            if f" {op} " in body:
                lhs, rhs = body.rsplit(f" {op} ", 1)
                coeffs, _ = parse_terms(lhs)
                rows.append((coeffs, op, float(rhs)))
                break
    bounds = {}
    for line in sections["bounds"]:
        if line.endswith(" free"):
            bounds[line[:-5].strip()] = (-math.inf, math.inf)
        elif " <= " in line:
            parts = line.split(" <= ")
            if len(parts) == 3:
                bounds[parts[1].strip()] = (float(parts[0]), float(parts[2]))
            else:
                bounds[parts[0].strip()] = (-math.inf, float(parts[1]))
        elif " >= " in line:
            name, lo = line.split(" >= ")
            bounds[name.strip()] = (float(lo), math.inf)
    return obj, const, rows, bounds, set(sections["binaries"])


def test_export_single_variable(tmp_path):
    m = MixedBinaryModel()
    x = m.add_var("x", 0.0, 10.0)
    m.add_objective(x, 2.0)
    path = tmp_path / "m.lp"
    export_lp_file(m, path)
    text = path.read_text()
    assert text.count("obj:") == 1
    assert "obj: 2.0 x" in text
    bounds_lines = text.split("Bounds\n")[1].splitlines()
    assert [l for l in bounds_lines if l.strip() and l != "End"] == [" 0.0 <= x <= 10.0"]


def test_export_round_trip(tmp_path):
    rng = np.random.default_rng(21)
    model, _ = random_milp(rng, max_binaries=4, max_cont=3)
    path = tmp_path / "model.lp"
    export_lp_file(model, path)
    obj, const, rows, bounds, binaries = parse_lp_file(path)
    names = model.var_names
    expected_obj = {names[j]: a for j, a in model.obj.items() if a != 0.0}
    assert set(obj) == set(expected_obj)
    for name, coef in expected_obj.items():
        assert obj[name] == pytest.approx(coef, abs=1e-12)
    assert const == pytest.approx(model.obj_const, abs=1e-12)
    assert len(rows) == len(model.rows)
    for (coeffs, op, rhs), (exp_c, exp_rel, exp_rhs) in zip(rows, model.rows):
        expected = {names[j]: a for j, a in exp_c.items() if a != 0.0}
        assert coeffs == pytest.approx(expected)
        assert rhs == pytest.approx(exp_rhs, abs=1e-12)
        assert op == exp_rel
    for j, name in enumerate(names):
        assert bounds[name][0] == pytest.approx(model.lb[j])
        assert bounds[name][1] == pytest.approx(model.ub[j])
    assert binaries == {names[j] for j in model.binary_indices}


def test_export_no_constraints(tmp_path):
    m = MixedBinaryModel()
    x = m.add_var("x", 0.0, 1.0)
    m.add_objective(x, 1.0)
    path = tmp_path / "empty.lp"
    export_lp_file(m, path)
    text = path.read_text()
    assert "Subject To\nBounds" in text  # empty section is still valid
