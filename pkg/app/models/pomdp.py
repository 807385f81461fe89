"""
POMDP and finite-memory window models
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional

import numpy as np

from app.core.config import settings
from app.core.errors import ValidationError


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def stochastic_row_problems(table: np.ndarray, tol: Optional[float] = None) -> list[tuple[tuple[int, ...], str]]:
    """
    List (row index, message) for rows of ``table`` (last axis = outcomes)
    that are not probability distributions.
    """
    tol = settings.PROBABILITY_TOL if tol is None else tol
    problems = []
    for index in np.ndindex(*table.shape[:-1]):
        row = table[index]
        if not np.all(np.isfinite(row)):
            problems.append((index, "row contains non-finite values"))
        elif np.any(row < 0) or np.any(row > 1):
            problems.append((index, f"probabilities must lie in [0, 1], got {row.tolist()}"))
        elif abs(row.sum() - 1.0) > tol:
            problems.append((index, f"row sums to {row.sum():.17g}, expected 1"))
    return problems


# ============== POMDP ==============

@dataclass(frozen=True, eq=False)
class PomdpSpec:
    """
    Finite POMDP.

    transition[x, u, x'] = T(x'|x, u), observation[x, y] = O(y|x),
    cost[x, u] = c(x, u), prior[x] = mu(x).
    """

    transition: np.ndarray
    observation: np.ndarray
    cost: np.ndarray
    prior: np.ndarray
    name: str = "pomdp"

    def __post_init__(self):
        transition = _frozen(self.transition)
        observation = _frozen(self.observation)
        cost = _frozen(self.cost)
        prior = _frozen(self.prior)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "observation", observation)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "prior", prior)

        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValidationError(f"transition must have shape (X, U, X), got {transition.shape}")
        n_states, n_actions, _ = transition.shape
        if observation.ndim != 2 or observation.shape[0] != n_states:
            raise ValidationError(f"observation must have shape ({n_states}, Y), got {observation.shape}")
        if cost.shape != (n_states, n_actions):
            raise ValidationError(f"cost must have shape ({n_states}, {n_actions}), got {cost.shape}")
        if prior.shape != (n_states,):
            raise ValidationError(f"prior must have shape ({n_states},), got {prior.shape}")
        if min(transition.shape + observation.shape) < 1:
            raise ValidationError("state, observation and action counts must be positive")
        if not np.all(np.isfinite(cost)):
            raise ValidationError("cost must be finite")

        for label, table in (("transition", transition), ("observation", observation), ("prior", prior[None, :])):
            problems = stochastic_row_problems(table)
            if problems:
                index, message = problems[0]
                raise ValidationError(f"{label}{list(index)}: {message}")

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_obs(self) -> int:
        return self.observation.shape[1]

    @property
    def cost_sup(self) -> float:
        """||c||_inf"""
        return float(np.abs(self.cost).max())

    def window_codec(self, memory_n: int) -> "WindowCodec":
        return WindowCodec(self.num_obs, self.num_actions, memory_n)


# ============== Windows ==============

@dataclass(frozen=True)
class WindowState:
    """
    Finite-memory state h_t, newest first:
    observations (y_t, ..., y_{t-N}) and actions (u_{t-1}, ..., u_{t-N}).
    """

    observations: tuple[int, ...]
    actions: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(int(y) for y in self.observations))
        object.__setattr__(self, "actions", tuple(int(u) for u in self.actions))
        if len(self.observations) < 1:
            raise ValidationError("a window holds at least one observation")
        if len(self.actions) != len(self.observations) - 1:
            raise ValidationError(
                f"window with {len(self.observations)} observations needs "
                f"{len(self.observations) - 1} actions, got {len(self.actions)}"
            )

    @property
    def memory_n(self) -> int:
        return len(self.observations) - 1


@dataclass(frozen=True)
class WindowCodec:
    """
    Mixed-radix codec for windows: observations are the high digits,
    each sub-sequence big-endian newest first.
    """

    num_obs: int
    num_actions: int
    memory_n: int

    def __post_init__(self):
        if self.num_obs < 1 or self.num_actions < 1:
            raise ValidationError("observation and action counts must be positive")
        if self.memory_n < 0:
            raise ValidationError(f"memory N must be non-negative, got {self.memory_n}")

    @classmethod
    def for_size(cls, num_obs: int, num_actions: int, size: int) -> "WindowCodec":
        """Recover N from the number of windows |Y|^{N+1}|U|^N"""
        if num_obs * num_actions == 1 and size != 1:
            raise ValidationError(f"a model with one observation and one action has 1 window, got {size}")
        memory_n = 0
        while True:
            candidate = cls(num_obs, num_actions, memory_n)
            if candidate.size == size:
                return candidate
            if candidate.size > size:
                raise ValidationError(
                    f"{size} windows does not match any memory N for |Y|={num_obs}, |U|={num_actions}"
                )
            memory_n += 1

    @property
    def size(self) -> int:
        return self.num_obs ** (self.memory_n + 1) * self.num_actions ** self.memory_n

    @property
    def _action_space(self) -> int:
        return self.num_actions ** self.memory_n

    def encode(self, window: WindowState) -> int:
        if window.memory_n != self.memory_n:
            raise ValidationError(f"window has memory {window.memory_n}, codec expects {self.memory_n}")
        obs_part = 0
        for y in window.observations:
            if not 0 <= y < self.num_obs:
                raise ValidationError(f"observation index {y} out of range [0, {self.num_obs})")
            obs_part = obs_part * self.num_obs + y
        act_part = 0
        for u in window.actions:
            if not 0 <= u < self.num_actions:
                raise ValidationError(f"action index {u} out of range [0, {self.num_actions})")
            act_part = act_part * self.num_actions + u
        return obs_part * self._action_space + act_part

    def decode(self, index: int) -> WindowState:
        if not 0 <= index < self.size:
            raise ValidationError(f"window index {index} out of range [0, {self.size})")
        obs_part, act_part = divmod(int(index), self._action_space)
        observations = []
        for _ in range(self.memory_n + 1):
            obs_part, y = divmod(obs_part, self.num_obs)
            observations.append(y)
        actions = []
        for _ in range(self.memory_n):
            act_part, u = divmod(act_part, self.num_actions)
            actions.append(u)
        return WindowState(tuple(reversed(observations)), tuple(reversed(actions)))

    def shift_index(self, index: int, y_new: int, u_new: int) -> int:
        """encode(window_shift(decode(index), y_new, u_new)) without decoding"""
        obs_part, act_part = divmod(index, self._action_space)
        obs_part = y_new * self.num_obs ** self.memory_n + obs_part // self.num_obs
        if self.memory_n:
            act_part = u_new * self.num_actions ** (self.memory_n - 1) + act_part // self.num_actions
        else:
            act_part = 0
        return obs_part * self._action_space + act_part

    def windows(self) -> Iterator[WindowState]:
        for index in range(self.size):
            yield self.decode(index)

    @cached_property
    def shift_table(self) -> np.ndarray:
        """shift_table[h, y, u] = index of the window after observing y having taken u"""
        table = np.empty((self.size, self.num_obs, self.num_actions), dtype=np.int64)
        for h in range(self.size):
            for y in range(self.num_obs):
                for u in range(self.num_actions):
                    table[h, y, u] = self.shift_index(h, y, u)
        table.setflags(write=False)
        return table

    @cached_property
    def newest_observation(self) -> np.ndarray:
        """y_t of every window"""
        return _frozen([w.observations[0] for w in self.windows()], dtype=np.int64)


# ============== Predictor ==============

@dataclass(frozen=True, eq=False)
class Predictor:
    """Distribution of the hidden state (the predictor mu_{t-N})"""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size < 1:
            raise ValidationError("predictor must be a non-empty vector")
        problems = stochastic_row_problems(probs[None, :])
        if problems:
            raise ValidationError(f"predictor: {problems[0][1]}")

    @classmethod
    def uniform(cls, num_states: int) -> "Predictor":
        return cls(np.full(num_states, 1.0 / num_states))

    @classmethod
    def point_mass(cls, num_states: int, state: int) -> "Predictor":
        probs = np.zeros(num_states)
        probs[state] = 1.0
        return cls(probs)

    def __len__(self) -> int:
        return self.probs.size


# ============== Records ==============

@dataclass(frozen=True, slots=True)
class TransitionRecord:
    """One Z_t = (S_{t+1}, S_t, C_t, U_t) with encoded windows"""

    s_next: int
    s: int
    cost: float
    action: int


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Column-wise block of consecutive transition records"""

    s: np.ndarray
    s_next: np.ndarray
    cost: np.ndarray
    action: np.ndarray

    def __len__(self) -> int:
        return int(self.s.shape[0])

    def records(self) -> Iterator[TransitionRecord]:
        for s_next, s, cost, action in zip(
            self.s_next.tolist(), self.s.tolist(), self.cost.tolist(), self.action.tolist()
        ):
            yield TransitionRecord(s_next=s_next, s=s, cost=cost, action=action)


# ============== Policies ==============

@dataclass(frozen=True, eq=False)
class FiniteMemoryPolicy:
    """
    Window policy gamma[h, u]; when ``epsilon`` > 0 the table dominates
    epsilon * base row-wise (minorization).
    """

    table: np.ndarray
    epsilon: float = 0.0
    base: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        table = _frozen(self.table)
        object.__setattr__(self, "table", table)
        if table.ndim != 2:
            raise ValidationError(f"policy table must be 2-D (windows x actions), got shape {table.shape}")
        problems = stochastic_row_problems(table)
        if problems:
            index, message = problems[0]
            raise ValidationError(f"policy row {index[0]}: {message}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.epsilon > 0:
            if self.base is None:
                raise ValidationError("epsilon > 0 requires a base policy")
            base = _frozen(self.base)
            object.__setattr__(self, "base", base)
            if base.shape != (table.shape[1],):
                raise ValidationError(f"base policy must have {table.shape[1]} entries")
            if np.any(table < self.epsilon * base[None, :] - settings.PROBABILITY_TOL):
                raise ValidationError("policy does not dominate epsilon * base")

    @classmethod
    def uniform(cls, num_windows: int, num_actions: int) -> "FiniteMemoryPolicy":
        return cls(np.full((num_windows, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "FiniteMemoryPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        table = np.zeros((actions.size, num_actions))
        table[np.arange(actions.size), actions] = 1.0
        return cls(table)

    @classmethod
    def window_independent(cls, num_windows: int, action_probs) -> "FiniteMemoryPolicy":
        """Same action distribution in every window"""
        action_probs = np.asarray(action_probs, dtype=float)
        return cls(np.tile(action_probs, (num_windows, 1)))

    def mixed(self, epsilon: float, base=None) -> "FiniteMemoryPolicy":
        """(1 - epsilon) * gamma + epsilon * base"""
        base = np.full(self.num_actions, 1.0 / self.num_actions) if base is None else np.asarray(base, float)
        table = (1.0 - epsilon) * self.table + epsilon * base[None, :]
        return FiniteMemoryPolicy(table, epsilon=epsilon, base=base)

    @property
    def num_windows(self) -> int:
        return self.table.shape[0]

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.table == 0.0) | (self.table == 1.0)))

    @property
    def is_window_independent(self) -> bool:
        return bool(np.all(self.table == self.table[0][None, :]))
