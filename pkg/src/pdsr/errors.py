"""Exception types shared across the toolkit."""


class PdsrError(Exception):
    """Base class for all toolkit errors."""


class ModelError(PdsrError):
    """A mixed-binary model is malformed (bad bounds, unknown variable, ...)."""


class SolverError(PdsrError):
    """The solver failed numerically or returned an unusable status."""


class ScenarioFormatError(PdsrError):
    """Scenario/probability input could not be parsed or validated."""


class ConfigError(PdsrError):
    """Problem configuration is inconsistent with itself or the scenario set."""


class RecourseError(PdsrError):
    """A second-stage subproblem was infeasible; the concrete problem violates
    the complete-recourse assumption."""


class CacheError(PdsrError):
    """A cached projection matrix is stale, corrupt, or truncated."""


class InconsistencyError(PdsrError):
    """Numerical results contradict a guaranteed property beyond solver-gap
    tolerance (e.g. a strongly negative pairwise distance)."""
