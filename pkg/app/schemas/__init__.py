"""
Schemas package - config documents, model files and reports
"""
from app.schemas.common import ErrorResponse
from app.schemas.experiment import (
    BasisConfig, ScheduleConfig, LearnerConfig, PolicyConfig, OracleConfig,
    ExperimentConfig, parse_experiment, load_experiment
)
from app.schemas.model_file import ModelFile, LoadedModel, parse_model_file, load_model_file
from app.schemas.reports import (
    ErrorBoundReport, DominanceReport, ContractionReport,
    MixingProfile, CovarianceCheck, GordinReport,
    FilterStabilityReport, RolloutEstimate, FileDiff, DiffReport
)
from app.schemas.run import SeedOutcome, RunSummary


__all__ = [
    # Common
    "ErrorResponse",
    # Experiment
    "BasisConfig", "ScheduleConfig", "LearnerConfig", "PolicyConfig", "OracleConfig",
    "ExperimentConfig", "parse_experiment", "load_experiment",
    # Model file
    "ModelFile", "LoadedModel", "parse_model_file", "load_model_file",
    # Reports
    "ErrorBoundReport", "DominanceReport", "ContractionReport",
    "MixingProfile", "CovarianceCheck", "GordinReport",
    "FilterStabilityReport", "RolloutEstimate", "FileDiff", "DiffReport",
    # Run
    "SeedOutcome", "RunSummary",
]
