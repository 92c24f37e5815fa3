"""Two-stage stochastic problem contract and its solve modes.

A concrete problem compiles scenario sets into mixed-binary models.  The
first stage ("here-and-now") is a fixed, named variable set shared by every
compilation; the second stage ("wait-and-see") is scenario-indexed recourse.
Problems must have relatively complete recourse: every first-stage decision
admits a feasible second stage for every scenario (concrete problems ensure
this with penalized shedding/curtailment slacks).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import RecourseError
from .milp import DEFAULT_GAP_TOL, MixedBinaryModel, OPTIMAL, solve_milp


class TssoProblem(ABC):
    """Compiles two-stage stochastic programs over a scenario subset."""

    @abstractmethod
    def build_model(self, scenarios, weights,
                    fixed_first_stage=None) -> MixedBinaryModel:
        """Compile the weighted program; with ``fixed_first_stage`` the
        first-stage variables are substituted as constants."""

    @abstractmethod
    def first_stage_names(self) -> list[str]:
        """Names of the first-stage variables, in decision-vector order."""

    @abstractmethod
    def fingerprint_payload(self) -> dict:
        """Canonical configuration dict used for cache fingerprints."""


@dataclass
class FirstStageDecision:
    """A first-stage decision vector with its provenance."""

    values: np.ndarray  # aligned with TssoProblem.first_stage_names()
    objective_at_source: float
    source_scenario: int | None = None


def _extract_first_stage(problem: TssoProblem, model: MixedBinaryModel,
                         x: np.ndarray) -> np.ndarray:
    idx = [model.index_of(name) for name in problem.first_stage_names()]
    return np.array([x[j] for j in idx])


def solve_stochastic(problem: TssoProblem, scenarios, weights,
                     gap_tol: float = DEFAULT_GAP_TOL,
                     time_limit: float | None = None,
                     source_scenario: int | None = None):
    """Solve the weighted two-stage program in one monolithic MILP.

    Used both for the full-set benchmark and for reduced sets.  Returns
    (FirstStageDecision, objective, Solution).
    """
    weights = np.asarray(weights, dtype=float)
    if len(scenarios) == 0:
        raise ValueError("empty scenario set")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
    model = problem.build_model(scenarios, weights)
    sol = solve_milp(model, gap_tol=gap_tol, time_limit=time_limit)
    if sol.status not in (OPTIMAL, "gap_limit") or sol.x is None:
        raise RecourseError(
            f"stochastic program ended {sol.status}; the problem violates "
            "relatively complete recourse or is misconfigured")
    z = FirstStageDecision(_extract_first_stage(problem, model, sol.x),
                           sol.objective, source_scenario)
    return z, sol.objective, sol


def solve_scenario_specific(problem: TssoProblem, scenario,
                            gap_tol: float = DEFAULT_GAP_TOL,
                            source_index: int | None = None):
    """Solve the deterministic single-scenario program F(z, xi).

    Returns (FirstStageDecision, optimal value).  Tie handling among
    multiple optima is the solver's deterministic choice.
    """
    z, obj, _ = solve_stochastic(problem, [scenario], [1.0], gap_tol=gap_tol,
                                 source_scenario=source_index)
    return z, obj


def evaluate_with_fixed_first_stage(problem: TssoProblem,
                                    decision: FirstStageDecision, scenario,
                                    gap_tol: float = DEFAULT_GAP_TOL,
                                    with_components: bool = False):
    """Evaluate F(z, xi): first-stage cost plus optimal recourse for one
    scenario with the first stage substituted as constants.

    With ``with_components`` returns (value, named objective slices).
    """
    model = problem.build_model([scenario], [1.0],
                                fixed_first_stage=decision.values)
    sol = solve_milp(model, gap_tol=gap_tol)
    if sol.status != OPTIMAL or sol.x is None:
        raise RecourseError(
            f"second stage {sol.status} for fixed first stage "
            f"(source scenario {decision.source_scenario!r})")
    if not with_components:
        return sol.objective
    groups = {g: model.group_value(g, sol.x)
              for g in set(model.obj_groups) | set(model.obj_group_consts)}
    return sol.objective, groups
