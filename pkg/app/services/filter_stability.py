"""
Filter stability service - L_t by exact information-state propagation

L_t = sup over policies of E || P^{mu_t}(X_{t+N} | window) - P^{pi}(X_{t+N} | window) ||_1
where mu_t is the predictor obtained by filtering from a prior mu_0 and the
window covers times t..t+N.
"""
import logging
import math
from itertools import product
from typing import Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.errors import EnumerationBudgetError, ValidationError
from app.models.pomdp import FiniteMemoryPolicy, PomdpSpec, Predictor, WindowCodec, WindowState
from app.schemas.reports import FilterStabilityReport
from app.services.model import quantize_observations, window_posterior


logger = logging.getLogger(__name__)

BELIEF_DECIMALS = 12


def discount_horizon(beta: float, tol: Optional[float] = None) -> int:
    """Smallest t with beta^t * 2 / (1 - beta) < tol"""
    tol = settings.TAIL_TOLERANCE if tol is None else tol
    horizon = max(0, math.ceil(math.log(tol * (1.0 - beta) / 2.0) / math.log(beta)))
    while beta**horizon * 2.0 / (1.0 - beta) >= tol:
        horizon += 1
    return horizon


def observation_distance(y: int, y_other: int, points: Optional[np.ndarray] = None) -> float:
    if points is None:
        return float(abs(y - y_other))
    return float(np.linalg.norm(np.asarray(points[y], float) - np.asarray(points[y_other], float)))


def observation_resolution(observation_bins, points: Optional[np.ndarray] = None) -> float:
    """L_Y: largest diameter of an observation bin under the observation metric"""
    bins = np.asarray(observation_bins, dtype=np.int64)
    resolution = 0.0
    for b in range(int(bins.max()) + 1):
        members = np.flatnonzero(bins == b).tolist()
        for i, y in enumerate(members):
            for y_other in members[i + 1:]:
                resolution = max(resolution, observation_distance(y, y_other, points))
    return resolution


def _belief_key(belief: np.ndarray) -> tuple:
    return tuple(np.round(belief, BELIEF_DECIMALS).tolist())


class _Propagator:
    """Information states (predictor, last N observations, last N actions) under one policy"""

    def __init__(
        self,
        spec: PomdpSpec,
        codec: WindowCodec,
        table: np.ndarray,
        burn_in: np.ndarray,
        reference: np.ndarray,
        posterior_cache: dict,
    ):
        self.spec = spec
        self.codec = codec
        self.memory_n = codec.memory_n
        self.table = table
        self.burn_in = burn_in
        self.reference = reference
        self._posteriors = posterior_cache
        self._children: dict = {}
        self._losses: dict = {}

    def action_law(self, y: int, hobs: tuple, hact: tuple) -> np.ndarray:
        if len(hobs) < self.memory_n:
            return self.burn_in
        return self.table[self.codec.encode(WindowState((y,) + hobs, hact))]

    def reference_posterior(self, window: WindowState) -> Optional[np.ndarray]:
        index = self.codec.encode(window)
        if index not in self._posteriors:
            self._posteriors[index] = window_posterior(self.spec, self.reference, window)
        return self._posteriors[index]

    def children(self, key: tuple, belief: np.ndarray) -> list:
        cached = self._children.get(key)
        if cached is not None:
            return cached
        _, hobs, hact = key
        observation, transition = self.spec.observation, self.spec.transition
        out = []
        for y in range(self.spec.num_obs):
            p_y = float(belief @ observation[:, y])
            if p_y <= 0.0:
                continue
            posterior = belief * observation[:, y] / p_y
            law = self.action_law(y, hobs, hact)
            for u in np.flatnonzero(law > 0.0).tolist():
                predicted = posterior @ transition[:, u, :]
                child = (
                    _belief_key(predicted),
                    ((y,) + hobs)[: self.memory_n],
                    ((u,) + hact)[: self.memory_n],
                )
                out.append((child, predicted, p_y * float(law[u])))
        self._children[key] = out
        return out

    def advance(self, states: dict) -> dict:
        nxt: dict = {}
        for key, (prob, belief) in states.items():
            for child, predicted, weight in self.children(key, belief):
                entry = nxt.get(child)
                if entry is None:
                    nxt[child] = [prob * weight, predicted]
                else:
                    entry[0] += prob * weight
        return nxt

    def window_loss(self, key: tuple, belief: np.ndarray) -> float:
        """E || P^{belief}(X | window) - P^{reference}(X | window) ||_1 over the next window"""
        cached = self._losses.get(key)
        if cached is not None:
            return cached
        _, hobs, hact = key
        observation, transition = self.spec.observation, self.spec.transition
        total = 0.0
        frontier = [(1.0, belief, (), (), hobs, hact)]
        for step in range(self.memory_n + 1):
            nxt = []
            for prob, predicted, wobs, wact, pobs, pact in frontier:
                for y in range(self.spec.num_obs):
                    p_y = float(predicted @ observation[:, y])
                    if p_y <= 0.0:
                        continue
                    posterior = predicted * observation[:, y] / p_y
                    if step == self.memory_n:
                        reference = self.reference_posterior(WindowState((y,) + wobs, wact))
                        gap = 2.0 if reference is None else float(np.abs(posterior - reference).sum())
                        total += prob * p_y * gap
                        continue
                    law = self.action_law(y, pobs, pact)
                    for u in np.flatnonzero(law > 0.0).tolist():
                        nxt.append((
                            prob * p_y * float(law[u]),
                            posterior @ transition[:, u, :],
                            (y,) + wobs,
                            (u,) + wact,
                            ((y,) + pobs)[: self.memory_n],
                            ((u,) + pact)[: self.memory_n],
                        ))
            frontier = nxt
        self._losses[key] = total
        return total


def _policy_tables(
    codec: WindowCodec,
    policies: Optional[Sequence[FiniteMemoryPolicy]],
    exploration: Optional[FiniteMemoryPolicy],
) -> tuple[list[np.ndarray], str, bool]:
    if policies is not None:
        for policy in policies:
            if policy.table.shape != (codec.size, codec.num_actions):
                raise ValidationError(f"policy of shape {policy.table.shape} does not act on {codec.size} windows")
        return [policy.table for policy in policies], "supplied", False

    count = codec.num_actions**codec.size
    if count <= settings.POLICY_ENUMERATION_LIMIT:
        identity = np.eye(codec.num_actions)
        tables = [identity[list(actions)] for actions in product(range(codec.num_actions), repeat=codec.size)]
        return tables, "enumerated", False

    if exploration is None:
        exploration = FiniteMemoryPolicy.uniform(codec.size, codec.num_actions)
    if exploration.table.shape != (codec.size, codec.num_actions):
        raise ValidationError("exploration policy does not act on the observation windows")
    logger.warning(
        "%d deterministic policies exceed the enumeration limit; L_t is a lower estimate", count
    )
    return [exploration.table], "exploration-lower-estimate", True


def filter_stability(
    spec: PomdpSpec,
    pi_prior: Predictor,
    mu_priors: Sequence[Predictor],
    memory_n: int,
    t_max: Optional[int] = None,
    beta: float = 0.8,
    observation_bins=None,
    observation_points: Optional[np.ndarray] = None,
    policies: Optional[Sequence[FiniteMemoryPolicy]] = None,
    exploration: Optional[FiniteMemoryPolicy] = None,
    burn_in: Optional[np.ndarray] = None,
) -> FilterStabilityReport:
    """
    L_t for t = 0..t_max (default: the certified truncation horizon of beta),
    maximized over priors and policies. With ``observation_bins`` the model
    is seen through the binned channel and the report carries L_Y.
    """
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"discount beta must lie in (0, 1), got {beta}")
    if not mu_priors:
        raise ValidationError("at least one prior is required")
    for prior in list(mu_priors) + [pi_prior]:
        if len(prior) != spec.num_states:
            raise ValidationError(f"prior over {len(prior)} states for a model with {spec.num_states}")

    quantized = observation_bins is not None
    model = quantize_observations(spec, observation_bins) if quantized else spec
    codec = model.window_codec(memory_n)
    t_max = discount_horizon(beta) if t_max is None else int(t_max)

    paths = model.num_obs ** (memory_n + 1) * model.num_actions**memory_n
    if paths > settings.ENUMERATION_BUDGET:
        raise EnumerationBudgetError("window enumeration", paths, settings.ENUMERATION_BUDGET)

    burn_in = (
        np.full(model.num_actions, 1.0 / model.num_actions) if burn_in is None else np.asarray(burn_in, float)
    )
    tables, policy_set, lower_estimate = _policy_tables(codec, policies, exploration)

    losses = np.zeros(t_max + 1)
    exact_horizon = t_max
    posterior_cache: dict = {}
    for prior in mu_priors:
        for table in tables:
            propagator = _Propagator(model, codec, table, burn_in, pi_prior.probs, posterior_cache)
            states = {(_belief_key(prior.probs), (), ()): [1.0, prior.probs]}
            for t in range(t_max + 1):
                if t > exact_horizon or len(states) * paths > settings.ENUMERATION_BUDGET:
                    exact_horizon = min(exact_horizon, t - 1)
                    break
                loss = sum(prob * propagator.window_loss(key, belief) for key, (prob, belief) in states.items())
                losses[t] = max(losses[t], loss)
                if t < t_max:
                    states = propagator.advance(states)

    if exact_horizon < t_max:
        logger.warning("information states exceed the budget after t=%d; later L_t bounded by 2", exact_horizon)
        losses[exact_horizon + 1:] = 2.0
    losses = np.clip(losses, 0.0, 2.0)

    discounts = beta ** np.arange(t_max + 1)
    tail_bound = 2.0 * beta ** (t_max + 1) / (1.0 - beta)
    resolution = observation_resolution(observation_bins, observation_points) if quantized else None

    logger.info(
        "filter stability: %d policies (%s), %d priors, exact to t=%d of %d",
        len(tables), policy_set, len(mu_priors), exact_horizon, t_max,
    )
    return FilterStabilityReport(
        losses=losses.tolist(),
        beta=beta,
        t_max=t_max,
        exact_horizon=exact_horizon,
        discounted_sum=float(discounts @ losses) + tail_bound,
        tail_bound=tail_bound,
        policy_set=policy_set,
        n_policies=len(tables),
        n_priors=len(mu_priors),
        quantized=quantized,
        resolution=resolution,
        lower_estimate=lower_estimate,
    )
