"""Projection of a scenario set into problem space.

The projection cross-evaluates scenario-specific optima: entry (i, j) of
the matrix is the objective of scenario j dispatched with the first-stage
decision that is optimal for scenario i.  Diagonal solves run first (the
off-diagonal entries of row i need decision i); the result is independent
of worker count and scheduling.

The matrix is cached as a CSV with scenario-id headers plus a JSON sidecar
carrying the fingerprint, decisions, and timings; a cache is only reusable
when problem configuration, scenario data, and gap tolerance all match.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CacheError, InconsistencyError, RecourseError
from .milp import DEFAULT_GAP_TOL
from .parallel import pmap
from .scenarios import ScenarioSet, dump_values_csv, dump_probabilities_csv
from .tsso import (FirstStageDecision, TssoProblem,
                   evaluate_with_fixed_first_stage, solve_scenario_specific,
                   solve_stochastic)


@dataclass
class ProblemSpaceMatrix:
    """N x N cross-evaluation matrix with the decisions that produced it."""

    values: np.ndarray                      # [i, j] = objective of j under decision i
    decisions: list[FirstStageDecision]
    scenario_ids: list[str]
    fingerprint: str
    gap_tol: float
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def column_sums(self) -> np.ndarray:
        """Adaptability of all decisions to each scenario (worst-case signal)."""
        return self.values.sum(axis=0)

    def check_diagonal_optimality(self):
        """The diagonal must be column-wise minimal up to twice the solver gap."""
        F = self.values
        for i in range(self.n):
            slack = 2.0 * self.gap_tol * abs(F[i, i])
            col_min = F[:, i].min()
            if F[i, i] > col_min + slack + 1e-9:
                raise InconsistencyError(
                    f"diagonal entry {i} exceeds its column minimum by "
                    f"{F[i, i] - col_min:.3e} (> {slack:.3e}); a subproblem "
                    "was not solved to the claimed gap")


def fingerprint(problem: TssoProblem, scenario_set: ScenarioSet,
                gap_tol: float = DEFAULT_GAP_TOL) -> str:
    """Stable hash of problem config + scenario data + gap tolerance."""
    h = hashlib.sha256()
    h.update(json.dumps(problem.fingerprint_payload(), sort_keys=True,
                        separators=(",", ":")).encode())
    h.update(dump_values_csv(scenario_set).encode())
    h.update(dump_probabilities_csv(scenario_set).encode())
    h.update(repr(float(gap_tol)).encode())
    return h.hexdigest()


def build_problem_space_matrix(problem: TssoProblem, scenario_set: ScenarioSet,
                               workers: int = 1,
                               gap_tol: float = DEFAULT_GAP_TOL,
                               tie_break: str = "solver") -> ProblemSpaceMatrix:
    """Solve the N scenario-specific programs and the N(N-1) cross
    evaluations.

    ``tie_break="solver"`` accepts each deterministic scenario-specific
    optimum as-is.  ``tie_break="aggregate"`` re-solves each scenario with a
    near-optimality side constraint, selecting among epsilon-optimal
    first-stage decisions the one with the best total objective over the
    whole set; this costs N additional full-set solves and is intended for
    small N.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if tie_break not in ("solver", "aggregate"):
        raise ValueError(f"unknown tie_break mode {tie_break!r}")
    n = len(scenario_set)
    scenarios = scenario_set.scenarios

    t0 = time.monotonic()

    def diag(i: int):
        try:
            z, obj = solve_scenario_specific(problem, scenarios[i],
                                             gap_tol=gap_tol, source_index=i)
        except RecourseError as exc:
            raise RecourseError(f"scenario-specific solve failed at i={i}: {exc}")
        if tie_break == "aggregate":
            z = _aggregate_tie_break(problem, scenario_set, i, obj, gap_tol)
            # keep the diagonal consistent with the substituted decision
            obj = evaluate_with_fixed_first_stage(problem, z, scenarios[i],
                                                  gap_tol=gap_tol)
        return z, obj

    diag_results = pmap(diag, range(n), workers)
    diag_seconds = time.monotonic() - t0

    decisions = [z for z, _ in diag_results]
    F = np.zeros((n, n))
    for i, (_, obj) in enumerate(diag_results):
        F[i, i] = obj

    t1 = time.monotonic()
    cells = [(i, j) for i in range(n) for j in range(n) if i != j]

    def cell(ij):
        i, j = ij
        try:
            return evaluate_with_fixed_first_stage(problem, decisions[i],
                                                   scenarios[j], gap_tol=gap_tol)
        except RecourseError as exc:
            raise RecourseError(f"cross evaluation failed at (i={i}, j={j}): {exc}")

    for (i, j), value in zip(cells, pmap(cell, cells, workers)):
        F[i, j] = value
    offdiag_seconds = time.monotonic() - t1

    matrix = ProblemSpaceMatrix(
        values=F,
        decisions=decisions,
        scenario_ids=scenario_set.ids(),
        fingerprint=fingerprint(problem, scenario_set, gap_tol),
        gap_tol=gap_tol,
        meta={"tie_break": tie_break,
              "first_stage_names": problem.first_stage_names(),
              "timings": {"diagonal_seconds": diag_seconds,
                          "offdiagonal_seconds": offdiag_seconds}},
    )
    matrix.check_diagonal_optimality()
    return matrix


def _aggregate_tie_break(problem, scenario_set, i, diag_obj, gap_tol):
    """Among epsilon-optimal decisions for scenario i, pick the one with the
    best aggregate objective over the whole set.

    Implemented by re-solving the full-set model (uniform weights) with an
    epsilon-optimality row on the scenario-i objective; both compilations
    share one variable ordering, so the one-hot objective vector doubles as
    the side-constraint row.
    """
    n = len(scenario_set)
    onehot = np.zeros(n)
    onehot[i] = 1.0
    model_i = problem.build_model(scenario_set.scenarios, onehot)
    uniform = np.full(n, 1.0 / n)
    model = problem.build_model(scenario_set.scenarios, uniform)
    eps = gap_tol * max(1.0, abs(diag_obj))
    model.add_constraint(dict(model_i.obj), "<=",
                         diag_obj + eps - model_i.obj_const)
    from .milp import solve_milp, OPTIMAL
    sol = solve_milp(model, gap_tol=gap_tol)
    if sol.status != OPTIMAL:
        raise RecourseError(f"aggregate tie-break solve ended {sol.status}")
    idx = [model.index_of(name) for name in problem.first_stage_names()]
    return FirstStageDecision(np.array([sol.x[j] for j in idx]),
                              diag_obj, source_scenario=i)


# -- cache ----------------------------------------------------------------


def _meta_path(path) -> Path:
    p = Path(path)
    name = p.name[:-4] if p.name.endswith(".csv") else p.name
    return p.with_name(name + ".meta.json")


def save_matrix(matrix: ProblemSpaceMatrix, path):
    """Write F.csv (+ .meta.json sidecar); floats round-trip losslessly."""
    p = Path(path)
    with open(p, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario_id"] + matrix.scenario_ids)
        for i, sid in enumerate(matrix.scenario_ids):
            writer.writerow([sid] + [repr(float(v)) for v in matrix.values[i]])
    meta = {
        "fingerprint": matrix.fingerprint,
        "gap_tol": matrix.gap_tol,
        "scenario_ids": matrix.scenario_ids,
        "decisions": [{"values": [repr(float(v)) for v in d.values],
                       "objective_at_source": repr(float(d.objective_at_source)),
                       "source_scenario": d.source_scenario}
                      for d in matrix.decisions],
        "meta": matrix.meta,
    }
    with open(_meta_path(p), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_matrix(path, expected_fingerprint: str | None = None) -> ProblemSpaceMatrix:
    """Load a cached matrix; refuses a fingerprint mismatch."""
    p = Path(path)
    try:
        with open(_meta_path(p)) as fh:
            meta = json.load(fh)
        ids = meta["scenario_ids"]
        with open(p, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["scenario_id"] + ids:
                raise CacheError(f"cache {p} header does not match its metadata")
            values = []
            for sid, row in zip(ids, reader):
                if not row or row[0] != sid or len(row) != len(ids) + 1:
                    raise CacheError(f"cache {p} is truncated or reordered")
                values.append([float(v) for v in row[1:]])
            if len(values) != len(ids):
                raise CacheError(f"cache {p} is truncated")
    except CacheError:
        raise
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CacheError(f"cannot read cached matrix {p}: {exc}") from exc
    if expected_fingerprint is not None and meta["fingerprint"] != expected_fingerprint:
        raise CacheError(
            "cached matrix fingerprint does not match the requested problem "
            "configuration/scenario data (stale cache)")
    decisions = [FirstStageDecision(np.array([float(v) for v in d["values"]]),
                                    float(d["objective_at_source"]),
                                    d["source_scenario"])
                 for d in meta["decisions"]]
    return ProblemSpaceMatrix(np.array(values), decisions, list(ids),
                              meta["fingerprint"], float(meta["gap_tol"]),
                              meta.get("meta", {}))


def solve_benchmark(problem: TssoProblem, scenario_set: ScenarioSet,
                    gap_tol: float = DEFAULT_GAP_TOL,
                    time_limit: float | None = None):
    """Solve the full-set program (the reference every reduction is judged
    against).  Returns (decision, objective, solution)."""
    return solve_stochastic(problem, scenario_set.scenarios,
                            scenario_set.probabilities, gap_tol=gap_tol,
                            time_limit=time_limit)
