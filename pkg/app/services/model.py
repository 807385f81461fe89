"""
Model service - Bayes filtering, windows, simulation and the joint chain
"""
import logging
from bisect import bisect_right
from itertools import product
from typing import Iterator, Optional

import numpy as np

from app.core.config import settings
from app.core.errors import DegenerateEvidenceError, EnumerationBudgetError, ValidationError
from app.core.rng import make_rng
from app.models.pomdp import (
    FiniteMemoryPolicy,
    PomdpSpec,
    Predictor,
    Trajectory,
    TransitionRecord,
    WindowCodec,
    WindowState,
)


logger = logging.getLogger(__name__)


# ============== Windows ==============

def encode_window(w: WindowState, spec: PomdpSpec) -> int:
    """Mixed-radix index of a window"""
    return spec.window_codec(w.memory_n).encode(w)


def decode_window(index: int, spec: PomdpSpec, memory_n: int) -> WindowState:
    return spec.window_codec(memory_n).decode(index)


def window_shift(w: WindowState, y_new: int, u_new: int) -> WindowState:
    """Drop the oldest observation and action, put y_new and u_new in front"""
    observations = (int(y_new),) + w.observations[:-1]
    actions = ((int(u_new),) + w.actions[:-1]) if w.memory_n else ()
    return WindowState(observations, actions)


def codec_for_policy(spec: PomdpSpec, policy: FiniteMemoryPolicy, memory_n: Optional[int] = None) -> WindowCodec:
    if policy.num_actions != spec.num_actions:
        raise ValidationError(f"policy has {policy.num_actions} actions, model has {spec.num_actions}")
    if memory_n is None:
        return WindowCodec.for_size(spec.num_obs, spec.num_actions, policy.num_windows)
    codec = spec.window_codec(memory_n)
    if codec.size != policy.num_windows:
        raise ValidationError(f"policy covers {policy.num_windows} windows, memory {memory_n} has {codec.size}")
    return codec


# ============== Filtering ==============

def filter_update(mu: Predictor, y_prev: int, u_prev: int, spec: PomdpSpec) -> Predictor:
    """
    One predictor step G(mu, y_prev, u_prev): condition mu on y_prev through
    O, then push through T(.|., u_prev).
    """
    joint = mu.probs * spec.observation[:, y_prev]
    evidence = joint.sum()
    if evidence <= 0.0:
        raise DegenerateEvidenceError(mu.probs, y_prev)
    predicted = (joint / evidence) @ spec.transition[:, u_prev, :]
    return Predictor(predicted / predicted.sum())


def condition(probs: np.ndarray, y: int, spec: PomdpSpec) -> Optional[np.ndarray]:
    """Posterior of the current state given y, or None when y is impossible"""
    joint = probs * spec.observation[:, y]
    evidence = joint.sum()
    if evidence <= 0.0:
        return None
    return joint / evidence


def window_posterior(spec: PomdpSpec, predictor: np.ndarray, window: WindowState) -> Optional[np.ndarray]:
    """
    P(X_newest | window) when the state at the oldest window time has law
    ``predictor``; None when the window is impossible under it.
    """
    probs = np.asarray(predictor, dtype=float)
    observations = window.observations[::-1]
    actions = window.actions[::-1]
    for y, u in zip(observations[:-1], actions):
        posterior = condition(probs, y, spec)
        if posterior is None:
            return None
        probs = posterior @ spec.transition[:, u, :]
    return condition(probs, observations[-1], spec)


def initial_windows(
    spec: PomdpSpec,
    prior: np.ndarray,
    burn_in: np.ndarray,
    memory_n: int,
) -> list[tuple[int, float, np.ndarray]]:
    """
    Exact law of the first complete window h_0 after N burn-in steps from
    ``prior``: (window index, probability, posterior of X_0).
    """
    codec = spec.window_codec(memory_n)
    if codec.size > settings.ENUMERATION_BUDGET:
        raise EnumerationBudgetError("initial window enumeration", codec.size, settings.ENUMERATION_BUDGET)
    prior = np.asarray(prior, dtype=float)
    burn_in = np.asarray(burn_in, dtype=float)
    result = []
    for index in range(codec.size):
        window = codec.decode(index)
        observations = window.observations[::-1]
        actions = window.actions[::-1]
        # unnormalized forward message: P(x_k, y_{-N..k-1}, u_{-N..k-1})
        message = prior.copy()
        for y, u in zip(observations[:-1], actions):
            message = (message * spec.observation[:, y]) @ spec.transition[:, u, :] * burn_in[u]
        message = message * spec.observation[:, observations[-1]]
        mass = float(message.sum())
        if mass > 0.0:
            result.append((index, mass, message / mass))
    return result


# ============== Simulation ==============

def _cumulative(rows: np.ndarray) -> list:
    return np.cumsum(rows, axis=-1).tolist()


class Simulator:
    """Seeded generator of window transition records"""

    def __init__(
        self,
        spec: PomdpSpec,
        policy: FiniteMemoryPolicy,
        seed: int,
        memory_n: Optional[int] = None,
        burn_in: Optional[np.ndarray] = None,
        chunk_size: Optional[int] = None,
    ):
        self.spec = spec
        self.policy = policy
        self.codec = codec_for_policy(spec, policy, memory_n)
        self.seed = seed
        self.burn_in = (
            np.full(spec.num_actions, 1.0 / spec.num_actions) if burn_in is None else np.asarray(burn_in, float)
        )
        self.chunk_size = chunk_size or settings.SIMULATION_CHUNK

    def chunks(self, n_steps: int) -> Iterator[Trajectory]:
        """Yield consecutive record blocks covering n_steps steps"""
        if n_steps < 1:
            raise ValidationError(f"n_steps must be at least 1, got {n_steps}")
        spec, codec = self.spec, self.codec
        rng = make_rng(self.seed, "simulate")
        n_states, n_obs, n_actions = spec.num_states, spec.num_obs, spec.num_actions
        last_state, last_obs, last_action = n_states - 1, n_obs - 1, n_actions - 1
        trans_cum = _cumulative(spec.transition)
        obs_cum = _cumulative(spec.observation)
        policy_cum = _cumulative(self.policy.table)
        burn_cum = _cumulative(self.burn_in)
        cost = spec.cost.tolist()

        # burn-in: N actions from the burn-in law, records discarded
        x = min(bisect_right(_cumulative(spec.prior), rng.random()), last_state)
        observations, actions = [], []
        for _ in range(codec.memory_n):
            observations.append(min(bisect_right(obs_cum[x], rng.random()), last_obs))
            u = min(bisect_right(burn_cum, rng.random()), last_action)
            actions.append(u)
            x = min(bisect_right(trans_cum[x][u], rng.random()), last_state)
        observations.append(min(bisect_right(obs_cum[x], rng.random()), last_obs))
        h = codec.encode(WindowState(tuple(reversed(observations)), tuple(reversed(actions))))

        action_space = n_actions**codec.memory_n
        obs_high = n_obs**codec.memory_n
        act_high = n_actions ** (codec.memory_n - 1) if codec.memory_n else 0

        remaining = n_steps
        while remaining > 0:
            size = min(self.chunk_size, remaining)
            draws = rng.random((size, 3))
            s_out, s_next_out, cost_out, action_out = [], [], [], []
            for r_action, r_state, r_obs in draws.tolist():
                u = min(bisect_right(policy_cum[h], r_action), last_action)
                s_out.append(h)
                action_out.append(u)
                cost_out.append(cost[x][u])
                x = min(bisect_right(trans_cum[x][u], r_state), last_state)
                y = min(bisect_right(obs_cum[x], r_obs), last_obs)
                obs_part, act_part = divmod(h, action_space)
                obs_part = y * obs_high + obs_part // n_obs
                act_part = u * act_high + act_part // n_actions if act_high else 0
                h = obs_part * action_space + act_part
                s_next_out.append(h)
            remaining -= size
            yield Trajectory(
                s=np.array(s_out, dtype=np.int64),
                s_next=np.array(s_next_out, dtype=np.int64),
                cost=np.array(cost_out, dtype=float),
                action=np.array(action_out, dtype=np.int64),
            )

    def run(self, n_steps: int) -> Trajectory:
        """All n_steps records as one block"""
        blocks = list(self.chunks(n_steps))
        return Trajectory(
            s=np.concatenate([b.s for b in blocks]),
            s_next=np.concatenate([b.s_next for b in blocks]),
            cost=np.concatenate([b.cost for b in blocks]),
            action=np.concatenate([b.action for b in blocks]),
        )


def simulate(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    n_steps: int,
    seed: int,
    memory_n: Optional[int] = None,
    burn_in: Optional[np.ndarray] = None,
) -> Iterator[TransitionRecord]:
    """Stream of records (S_{t+1}, S_t, C_t, U_t) for t = 0 .. n_steps-1"""
    simulator = Simulator(spec, policy, seed, memory_n=memory_n, burn_in=burn_in)
    for block in simulator.chunks(n_steps):
        yield from block.records()


# ============== Joint chain ==============

def build_joint_chain(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    memory_n: Optional[int] = None,
) -> np.ndarray:
    """
    Transition matrix of (h_t, x_t, u_t), flattened as (h * |X| + x) * |U| + u:
    P[(h, x, u), (h', x', u')] = sum_y' T(x'|x, u) O(y'|x') gamma(u'|h') [h' = shift(h, y', u)].
    """
    codec = codec_for_policy(spec, policy, memory_n)
    n_windows, n_states, n_actions = codec.size, spec.num_states, spec.num_actions
    size = n_windows * n_states * n_actions
    chain = np.zeros((n_windows, n_states, n_actions, n_windows, n_states, n_actions))
    shift = codec.shift_table
    for h, x, u in product(range(n_windows), range(n_states), range(n_actions)):
        for y in range(spec.num_obs):
            h_next = shift[h, y, u]
            # (x') x (u') block for the fixed next window
            block = np.outer(spec.transition[x, u, :] * spec.observation[:, y], policy.table[h_next])
            chain[h, x, u, h_next] += block
    chain = chain.reshape(size, size)
    logger.debug("joint chain built: %d states", size)
    return chain


def joint_marginals(pi_joint: np.ndarray, spec: PomdpSpec, n_windows: int) -> np.ndarray:
    """Invariant weights reshaped to (h, x, u)"""
    return np.asarray(pi_joint).reshape(n_windows, spec.num_states, spec.num_actions)


def doeblin_coefficient(chain: np.ndarray, power: int) -> float:
    """max_j min_i P^power(i, j): positive iff P^power has a strictly positive column"""
    kernel = np.linalg.matrix_power(np.asarray(chain), max(int(power), 1))
    return float(kernel.min(axis=0).max())


def quantize_observations(spec: PomdpSpec, observation_bins) -> PomdpSpec:
    """Model seen through observation bins: O_hat(b|x) = sum_{y in B_b} O(y|x)"""
    observation_bins = np.asarray(observation_bins, dtype=np.int64)
    if observation_bins.shape != (spec.num_obs,):
        raise ValidationError(f"observation bins must have {spec.num_obs} entries")
    num_bins = int(observation_bins.max()) + 1
    observation = np.zeros((spec.num_states, num_bins))
    for y, b in enumerate(observation_bins):
        observation[:, b] += spec.observation[:, y]
    return PomdpSpec(spec.transition, observation, spec.cost, spec.prior, name=f"{spec.name}-binned")
