"""
Exact oracle objects: window models, stationary regime MDP, value tables, fixed points
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.core.config import settings
from app.core.errors import ValidationError
from app.models.pomdp import FiniteMemoryPolicy


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class WindowModel:
    """
    Finite MDP over encoded windows: cost[s, u] and kernel[s, u, s1].
    """

    cost: np.ndarray
    kernel: np.ndarray
    beta: float

    def __post_init__(self):
        for name in ("cost", "kernel"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"discount beta must lie in (0, 1), got {self.beta}")
        n_states, n_actions = self.cost.shape
        if self.kernel.shape != (n_states, n_actions, n_states):
            raise ValidationError("window model tables have inconsistent shapes")
        if np.abs(self.kernel.sum(axis=2) - 1.0).max() > settings.KERNEL_TOL:
            raise ValidationError("window model kernel rows are not stochastic")

    @property
    def num_states(self) -> int:
        return self.cost.shape[0]

    @property
    def num_actions(self) -> int:
        return self.cost.shape[1]

    @property
    def cost_sup(self) -> float:
        return float(np.abs(self.cost).max())

    def policy_kernel(self, policy: FiniteMemoryPolicy) -> np.ndarray:
        """P_gamma[s, s1] = sum_u gamma(u|s) kernel[s, u, s1]"""
        return np.einsum("su,sut->st", policy.table, self.kernel)

    def policy_cost(self, policy: FiniteMemoryPolicy) -> np.ndarray:
        return np.einsum("su,su->s", policy.table, self.cost)


@dataclass(frozen=True, eq=False)
class StationaryRegimeMDP(WindowModel):
    """
    Window MDP built from the invariant law of the joint chain:
    cost[s, u] = E[C | s, u], kernel[s, u, s1] = P(S_1 = s1 | s, u).

    ``null_pairs`` lists (s, u) with zero stationary mass; their rows hold
    an arbitrary but valid version of the conditional law.
    """

    pi_state: np.ndarray = None
    pi_sa: np.ndarray = None
    null_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        super().__post_init__()
        if self.pi_state is None or self.pi_sa is None:
            raise ValidationError("stationary MDP needs state and state-action weights")
        for name in ("pi_state", "pi_sa"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "null_pairs", tuple((int(s), int(u)) for s, u in self.null_pairs))

        if self.pi_sa.shape != self.cost.shape or self.pi_state.shape != (self.num_states,):
            raise ValidationError("stationary weights do not match the model shape")
        if np.abs(self.pi_sa.sum(axis=1) - self.pi_state).max() > settings.KERNEL_TOL:
            raise ValidationError("state-action weights do not marginalize to state weights")
        pushed = np.einsum("su,sut->t", self.pi_sa, self.kernel)
        if np.abs(pushed - self.pi_state).max() > settings.KERNEL_TOL:
            raise ValidationError("state weights are not stationary under the kernel")


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Values over states (J) or state-action pairs (Q)"""

    values: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.weights is not None:
            weights = _frozen(self.weights)
            if weights.shape != self.values.shape:
                raise ValidationError(f"weights shape {weights.shape} does not match values {self.values.shape}")
            object.__setattr__(self, "weights", weights)

    @property
    def over_actions(self) -> bool:
        return self.values.ndim == 2

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    @property
    def l2_norm(self) -> float:
        if self.weights is None:
            raise ValidationError("L2 norm needs stationary weights")
        return float(np.sqrt(np.sum(self.weights * self.values**2)))

    def greedy(self) -> np.ndarray:
        """argmin over actions, lowest index on ties"""
        if not self.over_actions:
            raise ValidationError("greedy actions need a state-action table")
        return np.argmin(self.values, axis=1)


@dataclass(frozen=True, eq=False)
class FixedPointSolution:
    """A theta* = b for the projected policy-evaluation equation"""

    A: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    sigma_min_sym: float
    residual: float = field(default=float("nan"))

    def __post_init__(self):
        for name in ("A", "b", "theta"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def linear_residual(self) -> float:
        return float(np.linalg.norm(self.A @ self.theta - self.b))
