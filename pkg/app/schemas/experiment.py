"""
Experiment config schemas
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from app.core.config import settings
from app.core.errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============== Parts ==============

class BasisConfig(_Strict):
    """
    quantizer: explicit window bins (plus action bins for a state-action basis)
    observation_bins: window bins induced by observation bins
    indicator: one feature per window (or per window-action pair)
    constant: the constant feature
    table: explicit feature rows
    """
    kind: Literal["quantizer", "observation_bins", "indicator", "constant", "table"]
    state_bins: Optional[list[int]] = None
    action_bins: Optional[list[int]] = None
    observation_bins: Optional[list[int]] = None
    over_actions: bool = False
    table: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "quantizer" and self.state_bins is None:
            raise ValueError("quantizer basis needs state_bins")
        if self.kind == "observation_bins" and self.observation_bins is None:
            raise ValueError("observation_bins basis needs observation_bins")
        if self.kind == "table" and self.table is None:
            raise ValueError("table basis needs table")
        return self


class ScheduleConfig(_Strict):
    kind: Literal["polynomial", "visit_count"] = "polynomial"
    a: float = Field(settings.SCHEDULE_A, gt=0)
    t0: float = Field(settings.SCHEDULE_T0, gt=0)
    rho: float = Field(settings.SCHEDULE_RHO, gt=0.5, le=1.0)


class LearnerConfig(_Strict):
    kind: Literal["td0", "linear_q", "tabular_q"]
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    theta0: Optional[list[float]] = None
    initial_value: float = 0.0


class PolicyConfig(_Strict):
    """Exploration / evaluated policy over the model windows"""
    kind: Literal["uniform", "table", "window_independent"] = "uniform"
    table: Optional[list[list[float]]] = None
    action_probs: Optional[list[float]] = None
    epsilon: float = Field(0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "table" and self.table is None:
            raise ValueError("table policy needs table")
        if self.kind == "window_independent" and self.action_probs is None:
            raise ValueError("window_independent policy needs action_probs")
        return self


class OracleConfig(_Strict):
    """Which oracle outputs and bound checks to compute"""
    bounds: bool = True
    filter_stability: bool = True
    mixing: bool = True
    gordin: bool = False
    dominance: bool = True
    contraction_pairs: int = Field(100, ge=1)
    k_max: int = Field(200, ge=0)
    t_max: Optional[int] = Field(None, ge=0)
    priors: Optional[list[list[float]]] = None
    belief_resolution: Optional[int] = Field(None, gt=0)


# ============== Experiment ==============

class ExperimentConfig(_Strict):
    name: str = Field(..., min_length=1)
    model: str
    memory_n: Optional[int] = Field(None, ge=0)
    beta: float = Field(0.8, gt=0.0, lt=1.0)
    n_steps: int = Field(..., ge=1)
    checkpoints: Optional[list[int]] = None
    n_checkpoints: int = Field(20, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    burn_in: Optional[list[float]] = None
    basis: BasisConfig
    learner: LearnerConfig
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    output_dir: Optional[str] = None

    @field_validator("seeds")
    @classmethod
    def distinct_seeds(cls, seeds: list[int]) -> list[int]:
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be distinct")
        if any(seed < 0 or seed >= 2**64 for seed in seeds):
            raise ValueError("seeds must lie in [0, 2**64)")
        return seeds

    @model_validator(mode="after")
    def check_checkpoints(self):
        if self.checkpoints is not None:
            if any(k < 1 or k > self.n_steps for k in self.checkpoints):
                raise ValueError(f"checkpoints must lie in [1, n_steps={self.n_steps}]")
            if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
                raise ValueError("checkpoints must be strictly increasing")
        if self.learner.kind == "tabular_q" and self.basis.kind not in ("quantizer", "observation_bins", "indicator"):
            raise ValueError("tabular Q-learning needs a quantizer, observation_bins or indicator basis")
        return self


def _field_path(loc: tuple) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_experiment(document: dict, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(document)
    except PydanticValidationError as exc:
        errors = exc.errors()
        fields = [_field_path(error["loc"]) for error in errors]
        lines = "; ".join(f"{field}: {error['msg']}" for field, error in zip(fields, errors))
        raise ConfigError(f"{source}: {lines}", fields) from exc


def load_experiment(path: str | Path) -> tuple[ExperimentConfig, Path]:
    """Config plus the directory relative paths resolve against"""
    path = Path(path)
    try:
        document = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed TOML: {exc}") from exc
    return parse_experiment(document, str(path)), path.resolve().parent
