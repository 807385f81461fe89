"""
Models package - POMDP, feature, oracle and learner types
"""
from app.models.pomdp import (
    PomdpSpec,
    WindowState,
    WindowCodec,
    Predictor,
    TransitionRecord,
    Trajectory,
    FiniteMemoryPolicy,
)
from app.models.features import FeatureBasis, QuantizerBasis, GramMatrix, ParameterVector
from app.models.oracle import WindowModel, StationaryRegimeMDP, ValueTable, FixedPointSolution
from app.models.learners import LearningRateSchedule, Td0State, TabularQState, ConvergenceTrace


__all__ = [
    # POMDP
    "PomdpSpec",
    "WindowState",
    "WindowCodec",
    "Predictor",
    "TransitionRecord",
    "Trajectory",
    "FiniteMemoryPolicy",
    # Features
    "FeatureBasis",
    "QuantizerBasis",
    "GramMatrix",
    "ParameterVector",
    # Oracle
    "WindowModel",
    "StationaryRegimeMDP",
    "ValueTable",
    "FixedPointSolution",
    # Learners
    "LearningRateSchedule",
    "Td0State",
    "TabularQState",
    "ConvergenceTrace",
]
