"""
Lab exceptions

Every error carries a human-readable ``detail`` and the process ``exit_code``
the CLI maps it to.
"""
from typing import Any, Optional


class LabError(Exception):
    """Base error for the lab"""

    exit_code: int = 1
    code: str = "lab_error"

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context

    def __str__(self) -> str:
        return self.detail


# ============== Validation ==============

class ValidationError(LabError):
    """Invalid input (model file, config, schedule, basis)"""
    code = "validation_error"


class ModelFileError(ValidationError):
    """Model file rejected, with the offending line when known"""
    code = "model_file_error"

    def __init__(self, detail: str, path: Optional[str] = None, line: Optional[int] = None):
        location = path or "<model>"
        if line is not None:
            location = f"{location}:{line}"
        super().__init__(f"{location}: {detail}", path=path, line=line)


class ConfigError(ValidationError):
    """Experiment config rejected, with dotted field paths"""
    code = "config_error"

    def __init__(self, detail: str, fields: Optional[list[str]] = None):
        super().__init__(detail, fields=fields or [])
        self.fields = fields or []


class ScheduleError(ValidationError):
    """Learning-rate schedule violates the Robbins-Monro conditions"""
    code = "schedule_error"


class BasisScaleError(ValidationError):
    """Feature values outside [-1, 1]"""
    code = "basis_scale_error"


# ============== Numerical ==============

class DegenerateEvidenceError(LabError):
    """Observation has zero probability under the predictor"""
    code = "degenerate_evidence"

    def __init__(self, mu, y_prev: int):
        super().__init__(
            f"observation {y_prev} is impossible under predictor {list(map(float, mu))}",
            mu=mu,
            y_prev=y_prev,
        )
        self.mu = mu
        self.y_prev = y_prev


class RankDeficiencyError(LabError):
    """Gram matrix is singular (sigma_min at or below tolerance)"""
    code = "rank_deficiency"

    def __init__(self, sigma_min: float, what: str = "Gram matrix"):
        super().__init__(f"{what} is singular: sigma_min={sigma_min:.6g}", sigma_min=sigma_min)
        self.sigma_min = sigma_min


class SingularSystemError(RankDeficiencyError):
    """Projected fixed-point system A theta = b is singular"""
    code = "singular_system"


class ReducibleChainError(LabError):
    """Chain has no unique invariant distribution or power iteration stalled"""
    code = "reducible_chain"


class CoverageError(LabError):
    """A state-action pair the exploration policy must visit has zero mass"""
    code = "coverage_error"

    def __init__(self, pairs: list[tuple[int, int]]):
        shown = ", ".join(f"(s={s}, u={u})" for s, u in pairs[:8])
        more = f" and {len(pairs) - 8} more" if len(pairs) > 8 else ""
        super().__init__(f"zero stationary mass on {shown}{more}", pairs=pairs)
        self.pairs = pairs


class DivergenceError(LabError):
    """Iterate left the finite region guarded by the divergence sentinel"""
    exit_code = 2
    code = "divergence"

    def __init__(self, step: int, norm: float):
        super().__init__(f"iterate diverged at step {step} (norm={norm:.6g})", step=step, norm=norm)
        self.step = step
        self.norm = norm


class EnumerationBudgetError(LabError):
    """Exhaustive enumeration would exceed the configured budget"""
    code = "enumeration_budget"

    def __init__(self, what: str, required: int, budget: int):
        super().__init__(
            f"{what} needs {required} enumerated items, budget is {budget}",
            required=required,
            budget=budget,
        )
        self.required = required
        self.budget = budget


# ============== Artifacts ==============

class ArtifactError(LabError):
    """Missing or incompatible run artifacts"""
    code = "artifact_error"
