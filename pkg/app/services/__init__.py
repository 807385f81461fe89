"""
Services package
"""
from app.services.belief_grid import BeliefGridSolver
from app.services.harness import ExperimentService, compare_runs
from app.services.model import Simulator


__all__ = [
    "BeliefGridSolver",
    "ExperimentService",
    "compare_runs",
    "Simulator",
]
