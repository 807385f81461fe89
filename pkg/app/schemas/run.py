"""
Run schemas - per-seed outcomes and the experiment summary
"""
from typing import Optional

from pydantic import BaseModel, Field

from app.schemas.common import ErrorResponse
from app.schemas.reports import ErrorBoundReport


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2
EXIT_BOUND_VIOLATION = 3
EXIT_MISMATCH = 4


class SeedOutcome(BaseModel):
    seed: int
    n_checkpoints: int
    final_step: Optional[int] = None
    final_distance: Optional[float] = None
    relative_error: Optional[float] = None
    diverged: bool = False
    error: Optional[ErrorResponse] = None
    starved: list[list[int]] = Field(default_factory=list)


class RunSummary(BaseModel):
    name: str
    model: str
    learner: str
    basis: str
    beta: float
    memory_n: int
    num_windows: int
    dimension: int
    n_steps: int
    oracle_only: bool = False
    theta_star: Optional[list[float]] = None
    diagnostics: dict[str, bool] = Field(default_factory=dict)
    bounds: list[ErrorBoundReport] = Field(default_factory=list)
    seeds: list[SeedOutcome] = Field(default_factory=list)
    exit_code: int = EXIT_OK

    @property
    def violations(self) -> list[str]:
        return [report.name for report in self.bounds if not report.holds]

    @property
    def diverged_seeds(self) -> list[int]:
        return [outcome.seed for outcome in self.seeds if outcome.diverged]
