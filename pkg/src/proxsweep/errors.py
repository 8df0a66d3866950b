"""Exception types shared across the package."""

from __future__ import annotations


class ProxsweepError(Exception):
    """Base class for all package errors."""


class ConstraintEvaluationError(ProxsweepError):
    """A constraint function (value, gradient or time derivative) failed to evaluate."""

    def __init__(self, constraint_id: int, what: str, cause: Exception | None = None):
        self.constraint_id = constraint_id
        self.what = what
        self.cause = cause
        super().__init__(f"constraint {constraint_id}: failed to evaluate {what}" +
                         (f" ({cause!r})" if cause is not None else ""))


class InvalidConstantsError(ProxsweepError):
    """Regularity constants outside their admissible range (e.g. alpha <= 0)."""


class InfeasibleConeError(ProxsweepError):
    """The admissible-velocity polyhedron is empty."""

    def __init__(self, base_point):
        self.base_point = base_point
        super().__init__(f"infeasible velocity polyhedron at base point {base_point}")


class StepSizeTooLargeError(ProxsweepError):
    """The first configuration left the admissible set; h must shrink."""

    def __init__(self, margin: float, violated_id: int):
        self.margin = margin
        self.violated_id = violated_id
        super().__init__(
            f"initial step leaves the admissible set: g_{violated_id} = {margin:.6g} < 0; "
            "reduce the step size")


class SimulationAbort(ProxsweepError):
    """A time step failed; carries the step index and the last valid state."""

    def __init__(self, step_index: int, state, reason: str):
        self.step_index = step_index
        self.state = state
        self.reason = reason
        super().__init__(f"step {step_index}: {reason}")


class ConfigError(ProxsweepError):
    """Invalid run configuration (unknown scenario, bad flag values, ...)."""
