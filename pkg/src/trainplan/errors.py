"""Exception types shared across the package."""

from __future__ import annotations


class TrainPlanError(Exception):
    """Base class for all package errors."""


class InsufficientResources(TrainPlanError):
    """A pool subtraction would drive some (gpu_type, region) count negative."""

    def __init__(self, gpu_type: str, region: str, have: int, want: int):
        self.gpu_type = gpu_type
        self.region = region
        self.have = have
        self.want = want
        super().__init__(
            f"need {want} node(s) of {gpu_type} in {region}, only {have} available"
        )


class MissingProfile(TrainPlanError):
    """No profiled record for the requested combination; callers skip the candidate."""

    def __init__(self, what: str, key: tuple):
        self.what = what
        self.key = key
        super().__init__(f"no profile for {what} {key}")


class ParseError(TrainPlanError):
    """Input is not syntactically valid JSON."""


class SchemaError(TrainPlanError):
    """Input parses but misses required fields or has wrong types."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ConsistencyError(TrainPlanError):
    """Profile data violates internal consistency rules (negative times, params mismatch)."""


class DegenerateFit(TrainPlanError):
    """Bandwidth fit is underdetermined, singular, or produces non-positive bandwidth."""


class InvalidPlan(TrainPlanError):
    """Plan failed structural validation; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"plan is invalid: {detail}")


class NoFeasiblePlan(TrainPlanError):
    """Search exhausted without a plan satisfying resources and constraints."""

    def __init__(self, reason: str, counts: dict | None = None):
        self.reason = reason
        self.counts = dict(counts or {})
        super().__init__(f"no feasible plan ({reason})")


class InstanceTooLarge(TrainPlanError):
    """Instance exceeds the exhaustive-search caps."""


class SearchDeadlineExceeded(TrainPlanError):
    """Cooperative deadline hit during plan search."""

    def __init__(self, elapsed: float, deadline: float):
        self.elapsed = elapsed
        self.deadline = deadline
        super().__init__(f"search exceeded deadline ({elapsed:.1f}s > {deadline:.1f}s)")
