"""Reduction-quality indices and the method-comparison harness.

Ex-ante indices (within-cluster distance sum, cluster-validity index) judge
a reduction before any re-optimization; ex-post indices (optimality gap,
per-representative effectiveness) measure the loss actually incurred by
dispatching on the reduced set and verifying against the full one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import PddMatrix, ReductionResult
from .errors import PdsrError
from .milp import DEFAULT_GAP_TOL, GAP_LIMIT
from .parallel import pmap
from .projection import ProblemSpaceMatrix, build_problem_space_matrix, solve_benchmark
from .scenarios import ScenarioSet
from .tsso import (FirstStageDecision, TssoProblem,
                   evaluate_with_fixed_first_stage, solve_stochastic)


def spdd(pdd: PddMatrix, probabilities, result: ReductionResult) -> float:
    """Probability-weighted distance of every scenario to its
    representative, recomputed from the assignment."""
    gamma = np.asarray(probabilities, dtype=float)
    result.validate(gamma)
    d = pdd.values
    return float(sum(gamma[i] * d[r, i] for i, r in result.assignment.items()))


def pddbi(pdd: PddMatrix, probabilities, result: ReductionResult) -> float:
    """Davies-Bouldin-style validity index on the problem-driven distance.

    Mean over clusters of the worst (compactness_m + compactness_n) /
    separation(m, n) ratio; undefined for a single cluster.
    """
    gamma = np.asarray(probabilities, dtype=float)
    result.validate(gamma)
    reps = result.representatives
    if len(reps) < 2:
        raise ValueError("cluster-validity index requires at least 2 clusters")
    d = pdd.values
    compact = {}
    for r in reps:
        members = result.members(r)
        omega = result.weights[r]
        compact[r] = float(sum(gamma[i] / omega * d[r, i] for i in members))
    total = 0.0
    for m in reps:
        worst = -np.inf
        for nrep in reps:
            if nrep == m:
                continue
            sep = max(d[m, nrep], 1e-12)   # guard coincident representatives
            worst = max(worst, (compact[m] + compact[nrep]) / sep)
        total += worst
    return total / len(reps)


@dataclass
class GapOutcome:
    """Ex-post optimality loss of one reduction."""

    og_abs: float | None          # $; None when the benchmark was not computed
    og_pct: float | None          # percent; None without a benchmark or a ~0 denominator
    reduced_on_full: float        # full-set objective of the reduced decision
    benchmark_objective: float | None
    decision: FirstStageDecision
    per_scenario: list[float]     # reduced decision evaluated on each scenario
    reduced_objective: float      # objective of the reduced program itself


def reduced_scenario_args(scenario_set: ScenarioSet, result: ReductionResult):
    reps = result.representatives
    scenarios = [scenario_set.scenarios[r] for r in reps]
    weights = np.array([result.weights[r] for r in reps])
    return scenarios, weights


def optimality_gap(problem: TssoProblem, scenario_set: ScenarioSet,
                   result: ReductionResult, gap_tol: float = DEFAULT_GAP_TOL,
                   workers: int = 1, benchmark=None,
                   benchmark_time_limit: float | None = None) -> GapOutcome:
    """Loss from dispatching on the reduced set, verified on the full set.

    ``benchmark`` may carry a precomputed (decision, objective) pair; when
    the benchmark solve hits its time limit the gap is reported as
    not-computed (None) and only the full-set cost of the reduced decision
    is available.
    """
    scenarios, weights = reduced_scenario_args(scenario_set, result)
    z_red, red_obj, _ = solve_stochastic(problem, scenarios, weights,
                                         gap_tol=gap_tol)
    gamma = scenario_set.probabilities
    vals = pmap(lambda s: evaluate_with_fixed_first_stage(
        problem, z_red, s, gap_tol=gap_tol), scenario_set.scenarios, workers)
    reduced_on_full = float(np.dot(gamma, vals))

    # benchmark: a precomputed (decision, objective) pair, False to skip,
    # or None to solve it here (timing out marks the gap not-computed)
    bench_obj = None
    if benchmark is False:
        pass
    elif benchmark is not None:
        bench_obj = float(benchmark[1])
    else:
        zb, ob, sol = solve_benchmark(problem, scenario_set, gap_tol=gap_tol,
                                      time_limit=benchmark_time_limit)
        if sol.status != GAP_LIMIT:
            bench_obj = float(ob)

    if bench_obj is None:
        return GapOutcome(None, None, reduced_on_full, None, z_red,
                          [float(v) for v in vals], float(red_obj))
    og_abs = reduced_on_full - bench_obj
    og_pct = None if abs(bench_obj) < 1e-6 else 100.0 * og_abs / bench_obj
    return GapOutcome(og_abs, og_pct, reduced_on_full, bench_obj, z_red,
                      [float(v) for v in vals], float(red_obj))


def scenario_effectiveness(problem: TssoProblem, scenario_set: ScenarioSet,
                           result: ReductionResult,
                           gap_tol: float = DEFAULT_GAP_TOL, workers: int = 1,
                           benchmark=None) -> dict[int, float]:
    """Increase in percent optimality gap when one representative is
    removed (remaining weights renormalized to sum to one)."""
    if result.k < 2:
        raise ValueError("scenario effectiveness requires at least 2 representatives")
    if benchmark is None:
        zb, bench_obj, _ = solve_benchmark(problem, scenario_set, gap_tol=gap_tol)
        benchmark = (zb, bench_obj)
    base = optimality_gap(problem, scenario_set, result, gap_tol=gap_tol,
                          workers=workers, benchmark=benchmark)
    if base.og_pct is None:
        raise PdsrError("scenario effectiveness needs a percent gap "
                        "(benchmark objective too close to zero)")
    se = {}
    for drop in result.representatives:
        keep = [r for r in result.representatives if r != drop]
        mass = sum(result.weights[r] for r in keep)
        scenarios = [scenario_set.scenarios[r] for r in keep]
        weights = np.array([result.weights[r] / mass for r in keep])
        z_red, _, _ = solve_stochastic(problem, scenarios, weights, gap_tol=gap_tol)
        vals = pmap(lambda s: evaluate_with_fixed_first_stage(
            problem, z_red, s, gap_tol=gap_tol), scenario_set.scenarios, workers)
        on_full = float(np.dot(scenario_set.probabilities, vals))
        og_pct = 100.0 * (on_full - benchmark[1]) / benchmark[1]
        se[drop] = og_pct - base.og_pct
    return se


@dataclass
class WorstCaseReport:
    """Outlier scan of the problem-space column sums."""

    flags: list[bool]
    rho: list[float]           # second-difference statistic per scenario
    sigma: list[float]         # decision-adaptability column sums
    bound: float
    normalized: bool

    def flagged_indices(self) -> list[int]:
        return [i for i, f in enumerate(self.flags) if f]


def detect_worst_case(matrix, bound: float = 2.0,
                      normalized: bool = True) -> WorstCaseReport:
    """Flag scenarios whose decision-adaptability sums jump away from the
    rest.

    The column sums are sorted ascending; a second-order difference above
    ``bound`` marks a jump, and every scenario above the largest such jump
    is flagged.  With ``normalized`` (default) the second differences are
    scaled by the median first difference, making the default bound
    portable across problems; the raw mode applies ``bound`` to the plain
    second differences.
    """
    F = matrix.values if isinstance(matrix, ProblemSpaceMatrix) else np.asarray(matrix)
    n = F.shape[0]
    if n < 3:
        raise ValueError("worst-case detection needs at least 3 scenarios")
    sigma = F.sum(axis=0)
    order = np.argsort(sigma, kind="stable")
    s = sigma[order]
    d1 = np.diff(s)
    d2 = np.diff(d1)
    if normalized:
        scale = float(np.median(d1))
        if scale <= 1e-12 * max(1.0, abs(float(s[-1]))):
            scale = 1e-12 * max(1.0, abs(float(s[-1])))
        stat = d2 / scale
    else:
        stat = d2.astype(float)

    rho_sorted = np.zeros(n)
    rho_sorted[2:] = stat
    flags_sorted = np.zeros(n, dtype=bool)
    above = np.flatnonzero(stat > bound)
    if above.size:
        # flag everything above the largest super-threshold jump; ties on
        # the maximum resolve to the latest jump (fewer flags)
        cut = int(above[stat[above] >= stat[above].max()].max())
        flags_sorted[cut + 2:] = True
    flags = np.zeros(n, dtype=bool)
    rho = np.zeros(n)
    flags[order] = flags_sorted
    rho[order] = rho_sorted
    return WorstCaseReport([bool(b) for b in flags], [float(v) for v in rho],
                           [float(v) for v in sigma], bound, normalized)


@dataclass
class EvaluationReport:
    """Full ex-ante + ex-post evaluation of one reduction."""

    spdd: float
    pddbi: float | None
    og_abs: float | None
    og_pct: float | None
    reduced_on_full: float
    benchmark_objective: float | None
    se: dict[int, float] | None
    worst_case: WorstCaseReport
    captured_worst_case: int                  # flagged scenarios among representatives
    verification_costs: dict
    timings: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        """Deterministic payload (timings are reported separately)."""
        return {
            "spdd": self.spdd,
            "pddbi": self.pddbi,
            "og_abs": self.og_abs,
            "og_pct": self.og_pct,
            "reduced_on_full": self.reduced_on_full,
            "benchmark_objective": self.benchmark_objective,
            "scenario_effectiveness":
                None if self.se is None
                else {str(k): v for k, v in sorted(self.se.items())},
            "worst_case_flags": self.worst_case.flags,
            "worst_case_rho": self.worst_case.rho,
            "captured_worst_case": self.captured_worst_case,
            "verification_costs": self.verification_costs,
        }


def verification_costs(problem: TssoProblem, decision: FirstStageDecision,
                       scenario_set: ScenarioSet,
                       gap_tol: float = DEFAULT_GAP_TOL, workers: int = 1):
    """Per-scenario objective and component costs of a fixed decision."""
    pairs = pmap(lambda s: evaluate_with_fixed_first_stage(
        problem, decision, s, gap_tol=gap_tol, with_components=True),
        scenario_set.scenarios, workers)
    values = [float(v) for v, _ in pairs]
    groups = sorted(pairs[0][1]) if pairs else []
    means = {g: float(np.mean([comp[g] for _, comp in pairs])) for g in groups}
    return values, means


def evaluate_reduction(problem: TssoProblem, scenario_set: ScenarioSet,
                       result: ReductionResult, matrix: ProblemSpaceMatrix,
                       pdd: PddMatrix, gap_tol: float = DEFAULT_GAP_TOL,
                       workers: int = 1, with_se: bool = True,
                       worst_case_bound: float = 2.0,
                       benchmark_time_limit: float | None = None) -> EvaluationReport:
    """Assemble the full evaluation report for one reduction."""
    timings = {}
    t0 = time.monotonic()
    bench = None
    zb, bench_obj, sol = solve_benchmark(problem, scenario_set, gap_tol=gap_tol,
                                         time_limit=benchmark_time_limit)
    if sol.status != GAP_LIMIT:
        bench = (zb, bench_obj)
    timings["benchmark_seconds"] = time.monotonic() - t0

    t0 = time.monotonic()
    gap = optimality_gap(problem, scenario_set, result, gap_tol=gap_tol,
                         workers=workers,
                         benchmark=bench if bench is not None else False)
    timings["gap_seconds"] = time.monotonic() - t0

    try:
        validity = pddbi(pdd, scenario_set.probabilities, result)
    except ValueError:
        validity = None

    se = None
    if with_se and result.k >= 2 and bench is not None:
        t0 = time.monotonic()
        se = scenario_effectiveness(problem, scenario_set, result,
                                    gap_tol=gap_tol, workers=workers,
                                    benchmark=bench)
        timings["se_seconds"] = time.monotonic() - t0

    wc = detect_worst_case(matrix, bound=worst_case_bound)
    captured = sum(1 for r in result.representatives if wc.flags[r])

    _, means = verification_costs(problem, gap.decision, scenario_set,
                                  gap_tol=gap_tol, workers=workers)
    ver = {"per_scenario_value": gap.per_scenario, "mean_components": means}

    return EvaluationReport(
        spdd=spdd(pdd, scenario_set.probabilities, result),
        pddbi=validity,
        og_abs=gap.og_abs, og_pct=gap.og_pct,
        reduced_on_full=gap.reduced_on_full,
        benchmark_objective=gap.benchmark_objective,
        se=se, worst_case=wc, captured_worst_case=captured,
        verification_costs=ver, timings=timings)


def compare_methods(problem: TssoProblem, scenario_set: ScenarioSet,
                    methods, k: int, seed: int = 0,
                    gap_tol: float = DEFAULT_GAP_TOL, workers: int = 1,
                    matrix: ProblemSpaceMatrix | None = None, mu: float = 0.0,
                    worst_case_bound: float = 2.0,
                    benchmark_time_limit: float | None = None):
    """Run every requested reduction method at the same K and score it.

    Returns (rows, timings): ``rows`` hold only deterministic fields (one
    per method plus a benchmark row); wall-clock timings are keyed by
    method in the second mapping.  A failing method yields a row marked
    failed instead of aborting the comparison.
    """
    from .baselines import run_baseline
    from .clustering import compute_pdd, solve_clustering

    timings: dict[str, dict] = {}
    rows: list[dict] = []
    gamma = scenario_set.probabilities

    t0 = time.monotonic()
    if matrix is None:
        # every row needs the worst-case flags, which live in problem space
        matrix = build_problem_space_matrix(problem, scenario_set,
                                            workers=workers, gap_tol=gap_tol)
    tau_p = time.monotonic() - t0
    wc = detect_worst_case(matrix, bound=worst_case_bound)
    flagged = wc.flagged_indices()

    bench = None
    t0 = time.monotonic()
    zb, bench_obj, sol = solve_benchmark(problem, scenario_set, gap_tol=gap_tol,
                                         time_limit=benchmark_time_limit)
    bench_seconds = time.monotonic() - t0
    if sol.status != GAP_LIMIT:
        bench = (zb, bench_obj)

    bench_row = {"method": "benchmark", "status": "ok", "k": len(scenario_set),
                 "kappa": len(flagged), "og_pct": 0.0 if bench else None,
                 "og_abs": 0.0 if bench else None,
                 "objective_on_full": bench_obj if bench else None,
                 "representatives": list(range(len(scenario_set)))}
    if bench:
        _, means = verification_costs(problem, zb, scenario_set,
                                      gap_tol=gap_tol, workers=workers)
        bench_row["mean_components"] = means
        bench_row["first_stage"] = problem_first_stage_summary(problem, zb)
    rows.append(bench_row)
    timings["benchmark"] = {"solve_seconds": bench_seconds}

    for name in methods:
        row = {"method": name, "k": k}
        tm: dict[str, float] = {}
        try:
            t0 = time.monotonic()
            if name == "pdsr":
                pdd = compute_pdd(matrix, mu=mu,
                                  scenario_set=scenario_set if mu > 0 else None)
                result = solve_clustering(pdd, gamma, fixed_k=k, gap_tol=gap_tol)
                tm["projection_seconds"] = tau_p
            else:
                result = run_baseline(name, scenario_set, k, seed=seed)
            tm["clustering_seconds"] = time.monotonic() - t0

            t0 = time.monotonic()
            gap = optimality_gap(problem, scenario_set, result, gap_tol=gap_tol,
                                 workers=workers,
                                 benchmark=bench if bench is not None else False)
            tm["evaluation_seconds"] = time.monotonic() - t0

            _, means = verification_costs(problem, gap.decision, scenario_set,
                                          gap_tol=gap_tol, workers=workers)
            row.update({
                "status": "ok",
                "representatives": result.representatives,
                "kappa": sum(1 for r in result.representatives if wc.flags[r]),
                "og_pct": gap.og_pct, "og_abs": gap.og_abs,
                "objective_on_full": gap.reduced_on_full,
                "mean_components": means,
                "first_stage": problem_first_stage_summary(problem, gap.decision),
            })
        except Exception as exc:  # per-method isolation, row marked failed
            row.update({"status": f"failed: {exc}"})
        rows.append(row)
        timings[name] = tm
    return rows, timings


def problem_first_stage_summary(problem: TssoProblem,
                                decision: FirstStageDecision) -> dict:
    """Problem-specific scalar summary of a first-stage decision."""
    summarize = getattr(problem, "first_stage_summary", None)
    if summarize is None:
        return {}
    return summarize(decision)
