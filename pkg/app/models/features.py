"""
Feature bases, quantizers and Gram matrices
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Optional

import numpy as np

from app.core.config import settings
from app.core.errors import BasisScaleError, ValidationError
from app.models.pomdp import WindowCodec, WindowState


ParameterVector = np.ndarray


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    """
    Tabulated basis functions.

    Rows of ``matrix`` are Phi(s) for a state basis, or Phi(s, u) at row
    s * num_actions + u for a state-action basis.
    """

    matrix: np.ndarray
    num_actions: Optional[int] = None
    name: str = "table"

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        object.__setattr__(self, "matrix", matrix)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise ValidationError(f"feature matrix must be 2-D and non-empty, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("feature values must be finite")
        worst = float(np.abs(matrix).max())
        if worst > 1.0 + settings.PROBABILITY_TOL:
            raise BasisScaleError(f"feature values must satisfy |phi| <= 1, found {worst:.6g}")
        if self.num_actions is not None and matrix.shape[0] % self.num_actions:
            raise ValidationError(
                f"{matrix.shape[0]} feature rows is not a multiple of {self.num_actions} actions"
            )

    @classmethod
    def constant(cls, num_states: int, num_actions: Optional[int] = None) -> "FeatureBasis":
        rows = num_states * (num_actions or 1)
        return cls(np.ones((rows, 1)), num_actions=num_actions, name="constant")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    @property
    def over_actions(self) -> bool:
        return self.num_actions is not None

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0] // (self.num_actions or 1)

    def __call__(self, s: int, u: Optional[int] = None) -> np.ndarray:
        if self.over_actions:
            if u is None:
                raise ValidationError("state-action basis needs an action")
            return self.matrix[s * self.num_actions + u]
        return self.matrix[s]

    @cached_property
    def by_state_action(self) -> np.ndarray:
        """Phi as a (S, U, d) array"""
        if not self.over_actions:
            raise ValidationError("state basis has no action axis")
        return self.matrix.reshape(self.num_states, self.num_actions, self.dimension)

    def values(self, theta: ParameterVector) -> np.ndarray:
        """theta^T Phi at every row, shaped (S,) or (S, U)"""
        values = self.matrix @ np.asarray(theta, dtype=float)
        if self.over_actions:
            return values.reshape(self.num_states, self.num_actions)
        return values


@dataclass(frozen=True, eq=False)
class QuantizerBasis(FeatureBasis):
    """
    Indicator basis of a partition. State bins are always present; action
    bins make it a product partition over (s, u).
    """

    state_bins: Optional[np.ndarray] = None
    action_bins: Optional[np.ndarray] = None

    @classmethod
    def from_bins(cls, state_bins, action_bins=None, name: str = "quantizer") -> "QuantizerBasis":
        state_bins = np.asarray(state_bins, dtype=np.int64)
        num_state_bins = _check_bins(state_bins, "state")
        if action_bins is None:
            matrix = np.eye(num_state_bins)[state_bins]
            return cls(matrix, name=name, state_bins=_frozen(state_bins, np.int64))

        action_bins = np.asarray(action_bins, dtype=np.int64)
        num_action_bins = _check_bins(action_bins, "action")
        num_states, num_actions = state_bins.size, action_bins.size
        joint = state_bins[:, None] * num_action_bins + action_bins[None, :]
        matrix = np.eye(num_state_bins * num_action_bins)[joint.reshape(-1)]
        return cls(
            matrix,
            num_actions=num_actions,
            name=name,
            state_bins=_frozen(state_bins, np.int64),
            action_bins=_frozen(action_bins, np.int64),
        )

    @classmethod
    def from_observation_bins(
        cls,
        codec: WindowCodec,
        observation_bins,
        num_actions: Optional[int] = None,
        name: str = "observation-bins",
    ) -> "QuantizerBasis":
        """
        Window partition induced by a partition of the observations: two
        windows share a bin when their observations fall in the same bins
        and their actions agree.
        """
        observation_bins = np.asarray(observation_bins, dtype=np.int64)
        if observation_bins.shape != (codec.num_obs,):
            raise ValidationError(f"observation bins must have {codec.num_obs} entries")
        num_bins = _check_bins(observation_bins, "observation")
        coarse = WindowCodec(num_bins, codec.num_actions, codec.memory_n)
        state_bins = [
            coarse.encode(WindowState(tuple(observation_bins[list(w.observations)]), w.actions))
            for w in codec.windows()
        ]
        action_bins = None if num_actions is None else np.arange(num_actions)
        return cls.from_bins(state_bins, action_bins, name=name)

    @property
    def num_state_bins(self) -> int:
        return int(self.state_bins.max()) + 1

    @property
    def num_action_bins(self) -> int:
        return 1 if self.action_bins is None else int(self.action_bins.max()) + 1

    def bin_of(self, s: int, u: Optional[int] = None) -> tuple[int, int]:
        action_bin = 0 if self.action_bins is None or u is None else int(self.action_bins[u])
        return int(self.state_bins[s]), action_bin


def _check_bins(bins: np.ndarray, label: str) -> int:
    if bins.ndim != 1 or bins.size < 1:
        raise ValidationError(f"{label} bins must be a non-empty vector")
    if bins.min() < 0:
        raise ValidationError(f"{label} bins must be non-negative")
    count = int(bins.max()) + 1
    missing = sorted(set(range(count)) - set(bins.tolist()))
    if missing:
        raise ValidationError(f"{label} bins {missing} are empty; bins must be numbered 0..M-1 without gaps")
    return count


# ============== Gram ==============

@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Symmetric d x d second-moment matrix of the features"""

    matrix: np.ndarray
    provenance: Literal["exploration", "greedy"] = "exploration"

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        object.__setattr__(self, "matrix", matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValidationError(f"Gram matrix must be square, got {matrix.shape}")
        if np.abs(matrix - matrix.T).max(initial=0.0) > settings.SYMMETRY_TOL:
            raise ValidationError("Gram matrix is not symmetric")

    @cached_property
    def sigma_min(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]
