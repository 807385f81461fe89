"""
Report schemas - everything the oracle and analysis services emit
"""
from typing import Optional, Union

from pydantic import BaseModel, Field

from app.core.config import settings


InputValue = Union[float, int, str, bool, None]


# ============== Bounds ==============

class ErrorBoundReport(BaseModel):
    """Measured error against a closed-form bound"""
    name: str
    lhs: float
    rhs: float
    slack: float
    holds: bool
    inputs: dict[str, InputValue] = Field(default_factory=dict)

    @classmethod
    def build(
        cls,
        name: str,
        lhs: float,
        rhs: float,
        tolerance: float = 0.0,
        **inputs: InputValue,
    ) -> "ErrorBoundReport":
        """``tolerance`` is a certified numerical error in lhs, echoed in inputs"""
        slack = float(rhs) - float(lhs)
        if tolerance:
            inputs["numerical_tolerance"] = float(tolerance)
        return cls(
            name=name,
            lhs=float(lhs),
            rhs=float(rhs),
            slack=slack,
            holds=slack >= -(settings.BOUND_SLACK_TOL + tolerance),
            inputs=inputs,
        )


class DominanceReport(BaseModel):
    """min eigenvalue of Sigma_gamma - beta^2 Sigma_theta over greedy maps"""
    holds: bool
    worst_margin: float
    n_policies: int
    method: str
    beta: float
    worst_policy: list[int] = Field(default_factory=list)


class ContractionReport(BaseModel):
    """Largest observed ||PiT f - PiT g|| / ||f - g||"""
    max_ratio: float
    beta: float
    n_evaluated: int
    n_skipped: int
    holds: bool


# ============== Mixing ==============

class MixingProfile(BaseModel):
    alpha_bar: list[float]
    sqrt_partial_sums: list[float]
    summable: bool
    converged_at: Optional[int] = None
    second_eigenvalue_modulus: float
    fitted_rate: Optional[float] = None


class CovarianceCheck(BaseModel):
    """Cov(f(Z_k), E[f(Z_k)|Z_0]) against 4 alpha_bar(k) ||f||^2"""
    covariances: list[float]
    bounds: list[float]
    holds: bool


class GordinReport(BaseModel):
    """Partial sums of conditional-expectation deviations, max over start states"""
    k_max: int
    a_partial_sums: list[float]
    b_partial_sums: list[float]
    a_sup: float
    b_sup: float
    stabilized_at: Optional[int] = None
    sampled_only: bool = True


# ============== Filter stability ==============

class FilterStabilityReport(BaseModel):
    """L_t (or L_hat_t on binned observations) with certified truncation"""
    losses: list[float]
    beta: float
    t_max: int
    exact_horizon: int
    discounted_sum: float
    tail_bound: float
    policy_set: str
    n_policies: int
    n_priors: int
    quantized: bool = False
    resolution: Optional[float] = None
    lower_estimate: bool = False


# ============== Rollouts ==============

class RolloutEstimate(BaseModel):
    mean: float
    std_error: float
    n_rollouts: int
    horizon: int
    truncation_bias_bound: float


# ============== Compare ==============

class FileDiff(BaseModel):
    path: str
    kind: str
    mismatches: int
    max_abs_diff: float = 0.0
    detail: Optional[str] = None


class DiffReport(BaseModel):
    oracle: list[FileDiff] = Field(default_factory=list)
    traces: list[FileDiff] = Field(default_factory=list)
    other: list[FileDiff] = Field(default_factory=list)
    missing: list[str] = Field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.oracle or self.traces or self.other or self.missing)
