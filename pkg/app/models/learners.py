"""
Learner state, schedules and convergence traces
"""
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from app.core.config import settings
from app.core.errors import ScheduleError, ValidationError


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LearningRateSchedule:
    """
    polynomial: alpha_t = a / (t + t0) ** rho
    visit_count: alpha = 1 / (1 + prior visits of the updated cell)
    """

    kind: Literal["polynomial", "visit_count"] = "polynomial"
    a: float = settings.SCHEDULE_A
    t0: float = settings.SCHEDULE_T0
    rho: float = settings.SCHEDULE_RHO

    def rate(self, t: int, visits: int = 0) -> float:
        if self.kind == "visit_count":
            return 1.0 / (1.0 + visits)
        return self.a / (t + self.t0) ** self.rho

    def validate_robbins_monro(self) -> None:
        """sum alpha = inf and sum alpha^2 < inf"""
        if self.kind == "visit_count":
            return
        if self.a <= 0:
            raise ScheduleError(f"schedule scale a must be positive, got {self.a}")
        if self.t0 <= 0:
            raise ScheduleError(f"schedule offset t0 must be positive, got {self.t0}")
        if not 0.5 < self.rho <= 1.0:
            raise ScheduleError(f"schedule exponent rho must lie in (0.5, 1], got {self.rho}")


@dataclass(frozen=True, eq=False)
class Td0State:
    """Iterate of a linear learner (TD(0) or linear Q-learning)"""

    theta: np.ndarray
    t: int = 0
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(self.theta))

    @classmethod
    def zeros(cls, dimension: int, schedule: Optional[LearningRateSchedule] = None) -> "Td0State":
        return cls(np.zeros(dimension), 0, schedule or LearningRateSchedule())

    @property
    def alpha(self) -> float:
        return self.schedule.rate(self.t)


@dataclass(frozen=True, eq=False)
class TabularQState:
    """Q table over (state bin, action bin) with visit counts"""

    q: np.ndarray
    counts: np.ndarray
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))
        object.__setattr__(self, "counts", _frozen(self.counts, np.int64))
        if self.q.shape != self.counts.shape or self.q.ndim != 2:
            raise ValidationError("Q table and visit counts must share a 2-D shape")
        if np.any(self.counts < 0):
            raise ValidationError("visit counts must be non-negative")

    @classmethod
    def initial(cls, num_state_bins: int, num_action_bins: int, value: float = 0.0) -> "TabularQState":
        shape = (num_state_bins, num_action_bins)
        return cls(np.full(shape, float(value)), np.zeros(shape, dtype=np.int64))

    @property
    def starved(self) -> list[tuple[int, int]]:
        """Cells never visited"""
        return [tuple(map(int, cell)) for cell in np.argwhere(self.counts == 0)]


@dataclass(frozen=True, eq=False)
class ConvergenceTrace:
    """Checkpointed iterates of one seeded run"""

    steps: tuple[int, ...]
    snapshots: np.ndarray
    distances: Optional[np.ndarray] = None
    diverged: bool = False
    divergence_step: Optional[int] = None
    divergence_norm: Optional[float] = None
    visit_counts: Optional[np.ndarray] = None
    starved: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(int(k) for k in self.steps))
        object.__setattr__(self, "snapshots", _frozen(self.snapshots))
        if self.distances is not None:
            object.__setattr__(self, "distances", _frozen(self.distances))
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValidationError("checkpoint steps must be strictly increasing")
        if self.snapshots.shape[0] != len(self.steps):
            raise ValidationError("one snapshot per checkpoint step is required")

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def final_distance(self) -> Optional[float]:
        if self.distances is None or not len(self.distances):
            return None
        return float(self.distances[-1])
