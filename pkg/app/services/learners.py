"""
Learner service - TD(0), linear Q-learning and quantized tabular Q-learning

Step functions are pure state transitions; the runners replay the same
update on simulator chunks and checkpoint the iterates.
"""
import logging
import math
from typing import Optional, Sequence, Union

import numpy as np

from app.core.config import settings
from app.core.errors import DivergenceError, ValidationError
from app.models.features import FeatureBasis, ParameterVector, QuantizerBasis
from app.models.learners import ConvergenceTrace, LearningRateSchedule, TabularQState, Td0State
from app.models.oracle import ValueTable
from app.models.pomdp import FiniteMemoryPolicy, PomdpSpec, TransitionRecord
from app.services.model import Simulator


logger = logging.getLogger(__name__)


# ============== Update arithmetic ==============

def _dot(theta: list, phi: list) -> float:
    total = 0.0
    for a, b in zip(theta, phi):
        total += a * b
    return total


def _temporal_update(theta: list, phi: list, cost: float, next_value: float, beta: float, alpha: float) -> list:
    """theta - alpha * phi * (theta^T phi - cost - beta * next_value)"""
    delta = _dot(theta, phi) - cost - beta * next_value
    step = alpha * delta
    return [t - step * p for t, p in zip(theta, phi)]


def _check_finite(theta: list, step: int) -> None:
    norm = math.sqrt(_dot(theta, theta))
    if not norm <= settings.DIVERGENCE_NORM:
        raise DivergenceError(step, norm)


def _rows(basis: FeatureBasis) -> list[list[float]]:
    return basis.matrix.tolist()


# ============== Steps ==============

def td0_step(state: Td0State, rec: TransitionRecord, basis: FeatureBasis, beta: float) -> Td0State:
    """theta' = theta - alpha_t Phi(S_t) [theta^T Phi(S_t) - C_t - beta theta^T Phi(S_{t+1})]"""
    if basis.over_actions:
        raise ValidationError("TD(0) needs a state basis")
    theta = state.theta.tolist()
    next_value = _dot(theta, basis(rec.s_next).tolist())
    theta = _temporal_update(theta, basis(rec.s).tolist(), rec.cost, next_value, beta, state.alpha)
    _check_finite(theta, state.t)
    return Td0State(np.array(theta), state.t + 1, state.schedule)


def linear_q_step(state: Td0State, rec: TransitionRecord, basis_sa: FeatureBasis, beta: float) -> Td0State:
    """
    theta' = theta - alpha_t Phi(S_t, U_t) [theta^T Phi(S_t, U_t) - C_t - beta min_v theta^T Phi(S_{t+1}, v)]
    """
    if not basis_sa.over_actions:
        raise ValidationError("linear Q-learning needs a state-action basis")
    theta = state.theta.tolist()
    next_value = min(_dot(theta, basis_sa(rec.s_next, v).tolist()) for v in range(basis_sa.num_actions))
    theta = _temporal_update(theta, basis_sa(rec.s, rec.action).tolist(), rec.cost, next_value, beta, state.alpha)
    _check_finite(theta, state.t)
    return Td0State(np.array(theta), state.t + 1, state.schedule)


def _cells(quantizer: QuantizerBasis) -> tuple[list[int], list[int]]:
    if quantizer.state_bins is None or quantizer.action_bins is None:
        raise ValidationError("tabular Q-learning needs a quantizer with state and action bins")
    return quantizer.state_bins.tolist(), quantizer.action_bins.tolist()


def tabular_q_step(state: TabularQState, rec: TransitionRecord, quantizer: QuantizerBasis, beta: float) -> TabularQState:
    """Update the visited cell with alpha = 1 / (1 + prior visits); other cells untouched"""
    state_bins, action_bins = _cells(quantizer)
    b, a = state_bins[rec.s], action_bins[rec.action]
    q = state.q.copy()
    counts = state.counts.copy()
    alpha = 1.0 / (1.0 + counts[b, a])
    target = rec.cost + beta * float(q[state_bins[rec.s_next]].min())
    q[b, a] = q[b, a] - alpha * (q[b, a] - target)
    counts[b, a] += 1
    return TabularQState(q, counts, state.t + 1)


# ============== Runners ==============

def default_checkpoints(n_steps: int, count: int = 20) -> list[int]:
    """Evenly spaced steps ending at n_steps"""
    if n_steps < 1:
        raise ValidationError(f"n_steps must be at least 1, got {n_steps}")
    steps = np.unique(np.ceil(np.linspace(n_steps / count, n_steps, count)).astype(np.int64))
    return [int(k) for k in steps if k >= 1]


def _resolve_checkpoints(n_steps: int, checkpoints: Optional[Sequence[int]]) -> list[int]:
    if checkpoints is None:
        return default_checkpoints(n_steps)
    steps = sorted(set(int(k) for k in checkpoints))
    if not steps or steps[0] < 1 or steps[-1] > n_steps:
        raise ValidationError(f"checkpoints must lie in [1, {n_steps}]")
    return steps


def _run_linear(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    basis: FeatureBasis,
    schedule: LearningRateSchedule,
    beta: float,
    n_steps: int,
    seed: int,
    checkpoints: Optional[Sequence[int]],
    theta_star: Optional[ParameterVector],
    theta0: Optional[ParameterVector],
    memory_n: Optional[int],
    burn_in: Optional[np.ndarray],
    over_actions: bool,
) -> ConvergenceTrace:
    schedule.validate_robbins_monro()
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"discount beta must lie in (0, 1), got {beta}")
    steps = _resolve_checkpoints(n_steps, checkpoints)
    rows = _rows(basis)
    n_actions = basis.num_actions or 1
    theta = [0.0] * basis.dimension if theta0 is None else [float(v) for v in theta0]
    if len(theta) != basis.dimension:
        raise ValidationError(f"initial theta has {len(theta)} entries, basis dimension is {basis.dimension}")

    snapshots: list[list[float]] = []
    pending = iter(steps)
    next_checkpoint = next(pending)
    t = 0
    diverged_at, diverged_norm = None, None
    simulator = Simulator(spec, policy, seed, memory_n=memory_n, burn_in=burn_in)

    try:
        for block in simulator.chunks(n_steps):
            for s, s_next, cost, action in zip(
                block.s.tolist(), block.s_next.tolist(), block.cost.tolist(), block.action.tolist()
            ):
                alpha = schedule.rate(t)
                if over_actions:
                    base = s_next * n_actions
                    next_value = min(_dot(theta, rows[base + v]) for v in range(n_actions))
                    phi = rows[s * n_actions + action]
                else:
                    next_value = _dot(theta, rows[s_next])
                    phi = rows[s]
                theta = _temporal_update(theta, phi, cost, next_value, beta, alpha)
                _check_finite(theta, t)
                t += 1
                if t == next_checkpoint:
                    snapshots.append(theta)
                    next_checkpoint = next(pending, None)
    except DivergenceError as exc:
        diverged_at, diverged_norm = exc.step, exc.norm
        logger.warning("seed %d diverged at step %d (norm %.3g)", seed, exc.step, exc.norm)

    recorded = steps[: len(snapshots)]
    snapshot_array = np.array(snapshots, dtype=float).reshape(len(snapshots), basis.dimension)
    distances = None
    if theta_star is not None:
        distances = np.linalg.norm(snapshot_array - np.asarray(theta_star, float)[None, :], axis=1)
    return ConvergenceTrace(
        steps=tuple(recorded),
        snapshots=snapshot_array,
        distances=distances,
        diverged=diverged_at is not None,
        divergence_step=diverged_at,
        divergence_norm=diverged_norm,
    )


def run_td0(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    basis: FeatureBasis,
    schedule: LearningRateSchedule,
    beta: float,
    n_steps: int,
    seed: int,
    checkpoints: Optional[Sequence[int]] = None,
    theta_star: Optional[ParameterVector] = None,
    theta0: Optional[ParameterVector] = None,
    memory_n: Optional[int] = None,
    burn_in: Optional[np.ndarray] = None,
) -> ConvergenceTrace:
    """TD(0) along one simulated trajectory, iterates recorded at the checkpoint steps"""
    if basis.over_actions:
        raise ValidationError("TD(0) needs a state basis")
    return _run_linear(
        spec, policy, basis, schedule, beta, n_steps, seed,
        checkpoints, theta_star, theta0, memory_n, burn_in, over_actions=False,
    )


def run_linear_q(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    basis_sa: FeatureBasis,
    schedule: LearningRateSchedule,
    beta: float,
    n_steps: int,
    seed: int,
    checkpoints: Optional[Sequence[int]] = None,
    theta_star: Optional[ParameterVector] = None,
    theta0: Optional[ParameterVector] = None,
    memory_n: Optional[int] = None,
    burn_in: Optional[np.ndarray] = None,
) -> ConvergenceTrace:
    """Linear Q-learning under the time-invariant exploration policy"""
    if not basis_sa.over_actions:
        raise ValidationError("linear Q-learning needs a state-action basis")
    return _run_linear(
        spec, policy, basis_sa, schedule, beta, n_steps, seed,
        checkpoints, theta_star, theta0, memory_n, burn_in, over_actions=True,
    )


def run_tabular_q(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    quantizer: QuantizerBasis,
    beta: float,
    n_steps: int,
    seed: int,
    checkpoints: Optional[Sequence[int]] = None,
    q_star: Optional[Union[ValueTable, np.ndarray]] = None,
    initial_value: float = 0.0,
    memory_n: Optional[int] = None,
    burn_in: Optional[np.ndarray] = None,
) -> ConvergenceTrace:
    """
    Tabular Q-learning over (state bin, action bin) with visit-count rates.
    Snapshots are the flattened Q tables; distances are sup-norm gaps to q_star.
    """
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"discount beta must lie in (0, 1), got {beta}")
    state_bins, action_bins = _cells(quantizer)
    steps = _resolve_checkpoints(n_steps, checkpoints)
    n_state_bins, n_action_bins = quantizer.num_state_bins, quantizer.num_action_bins
    q = [[float(initial_value)] * n_action_bins for _ in range(n_state_bins)]
    counts = [[0] * n_action_bins for _ in range(n_state_bins)]

    snapshots = []
    pending = iter(steps)
    next_checkpoint = next(pending)
    t = 0
    simulator = Simulator(spec, policy, seed, memory_n=memory_n, burn_in=burn_in)
    for block in simulator.chunks(n_steps):
        for s, s_next, cost, action in zip(
            block.s.tolist(), block.s_next.tolist(), block.cost.tolist(), block.action.tolist()
        ):
            row = q[state_bins[s]]
            a = action_bins[action]
            visits = counts[state_bins[s]]
            alpha = 1.0 / (1.0 + visits[a])
            target = cost + beta * min(q[state_bins[s_next]])
            row[a] = row[a] - alpha * (row[a] - target)
            visits[a] += 1
            t += 1
            if t == next_checkpoint:
                snapshots.append([value for r in q for value in r])
                next_checkpoint = next(pending, None)

    snapshot_array = np.array(snapshots, dtype=float)
    distances = None
    if q_star is not None:
        reference = q_star.values if isinstance(q_star, ValueTable) else np.asarray(q_star, float)
        distances = np.abs(snapshot_array - reference.reshape(1, -1)).max(axis=1)
    final = TabularQState(np.array(q), np.array(counts, dtype=np.int64), t)
    if final.starved:
        logger.warning("seed %d: %d cells never visited, kept at their initial value", seed, len(final.starved))
    return ConvergenceTrace(
        steps=tuple(steps),
        snapshots=snapshot_array,
        distances=distances,
        visit_counts=final.counts,
        starved=tuple(final.starved),
    )


# ============== Policies ==============

def greedy_policy(q: Union[ValueTable, np.ndarray], quantizer: Optional[QuantizerBasis] = None) -> FiniteMemoryPolicy:
    """
    Deterministic policy taking argmin_u Q (lowest index on ties). With a
    quantizer, Q is over (state bin, action bin) and each window plays the
    lowest action of its best action bin.
    """
    values = q.values if isinstance(q, ValueTable) else np.asarray(q, dtype=float)
    if values.ndim != 2:
        raise ValidationError("greedy policies need a state-action table")
    if quantizer is None:
        return FiniteMemoryPolicy.deterministic(np.argmin(values, axis=1), values.shape[1])
    state_bins, action_bins = _cells(quantizer)
    if values.shape != (quantizer.num_state_bins, quantizer.num_action_bins):
        raise ValidationError(f"Q table of shape {values.shape} does not match the quantizer bins")
    representative = [action_bins.index(j) for j in range(quantizer.num_action_bins)]
    best = np.argmin(values, axis=1)
    actions = [representative[best[b]] for b in state_bins]
    return FiniteMemoryPolicy.deterministic(actions, len(action_bins))
