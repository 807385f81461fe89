"""
Application Configuration Settings
"""
from functools import lru_cache
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Lab settings loaded from environment variables"""

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Application
    APP_NAME: str = "Stationary Regime Lab"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Probability and linear algebra tolerances
    PROBABILITY_TOL: float = 1e-12
    KERNEL_TOL: float = 1e-10
    SINGULAR_TOL: float = 1e-10
    SYMMETRY_TOL: float = 1e-10

    # Invariant distribution
    POWER_ITERATION_TOL: float = 1e-14
    POWER_ITERATION_CAP: int = 1_000_000
    SPECTRAL_GAP_TOL: float = 1e-8

    # Learners
    DIVERGENCE_NORM: float = 1e8
    SCHEDULE_A: float = 1.0
    SCHEDULE_T0: float = 100.0
    SCHEDULE_RHO: float = 0.75
    SIMULATION_CHUNK: int = 65536

    # Oracle
    VALUE_ITERATION_TOL: float = 1e-10
    VALUE_ITERATION_CAP: int = 100_000
    MIXING_INCREMENT_TOL: float = 1e-10
    ENUMERATION_BUDGET: int = 100_000
    POLICY_ENUMERATION_LIMIT: int = 10_000
    GREEDY_ENUMERATION_LIMIT: int = 1_000_000
    DOMINANCE_SAMPLES: int = 10_000

    # Analysis
    BOUND_SLACK_TOL: float = 1e-9
    FIXED_POINT_TOL: float = 1e-8
    TAIL_TOLERANCE: float = 1e-6
    BELIEF_GRID_RESOLUTION: int = 1000
    BELIEF_GRID_BUDGET: int = 600_000

    # Harness
    OUTPUT_DIR: str = "./runs"
    DEFAULT_THREADS: int = 4
    FLOAT_FORMAT: str = ".17g"
    COMPARE_RTOL: float = 1e-9
    COMPARE_ATOL: float = 1e-12


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


settings = get_settings()
