"""Exception types shared across the planning stack."""

from __future__ import annotations


class CrustPlanError(Exception):
    """Base class for all package errors."""


class GeometryError(CrustPlanError):
    """Malformed or unsupported mesh input."""

    def __init__(self, mesh_name: str, message: str) -> None:
        super().__init__(f"{mesh_name}: {message}")
        self.mesh_name = mesh_name


class ContractViolation(CrustPlanError):
    """An operation was called outside its precondition."""


class ConfigError(CrustPlanError):
    """Unresolvable or invalid scenario / model configuration."""


class NoSolution(CrustPlanError):
    """Inverse kinematics exhausted its budget."""


class SolverError(CrustPlanError):
    """The quadratic program solver failed to converge."""

    def __init__(self, message: str, iterations: int, diagnostics: dict | None = None) -> None:
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations
        self.diagnostics = diagnostics or {}


class NoFeasibleGrasp(CrustPlanError):
    """No grasp candidate survives collision and reachability filtering."""


class PlanFailure(CrustPlanError):
    """Object motion planning gave up; ``cause`` is ``"timeout"`` or ``"iterations"``."""

    def __init__(self, cause: str, stats: dict) -> None:
        super().__init__(f"planning failed: {cause} {stats}")
        self.cause = cause
        self.stats = stats


class StepFailure(CrustPlanError):
    """No joint configuration satisfies one trajectory step.

    ``cause`` is ``"pose_unreachable"`` or ``"torque_infeasible"``; ``binding`` names the
    constraint that blocked the best candidate.
    """

    def __init__(self, cause: str, binding: str = "") -> None:
        super().__init__(f"step failed: {cause} ({binding})")
        self.cause = cause
        self.binding = binding


class TrajFailure(CrustPlanError):
    def __init__(self, t: int, cause: str, binding: str = "") -> None:
        super().__init__(f"trajectory failed at step {t}: {cause} ({binding})")
        self.t = t
        self.cause = cause
        self.binding = binding
