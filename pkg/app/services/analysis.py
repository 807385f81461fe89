"""
Analysis service - closed-form error bounds against exact quantities, rollouts
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import linprog

from app.core.config import settings
from app.core.errors import ValidationError
from app.core.rng import make_rng
from app.models.features import FeatureBasis, ParameterVector
from app.models.oracle import StationaryRegimeMDP, ValueTable
from app.models.pomdp import FiniteMemoryPolicy, PomdpSpec
from app.schemas.reports import ErrorBoundReport, FilterStabilityReport, RolloutEstimate
from app.services.belief_grid import BeliefGridSolver
from app.services.features import l2_norm, project
from app.services.filter_stability import observation_distance
from app.services.model import build_joint_chain, codec_for_policy, initial_windows


logger = logging.getLogger(__name__)

Function = Union[ValueTable, np.ndarray]


def _values(f: Function) -> np.ndarray:
    return f.values if isinstance(f, ValueTable) else np.asarray(f, dtype=float)


def _support(mdp: StationaryRegimeMDP) -> np.ndarray:
    return mdp.pi_state > settings.PROBABILITY_TOL


def _uniform_constant(beta: float, dimension: int, sigma_min: float) -> float:
    """1 + ((2 - beta)/(1 - beta)) sqrt(d / sigma_min)"""
    return 1.0 + (2.0 - beta) / (1.0 - beta) * math.sqrt(dimension / sigma_min)


def stationary_sigma_min(basis: FeatureBasis, mdp: StationaryRegimeMDP) -> float:
    gram = basis.matrix.T @ (mdp.pi_state[:, None] * basis.matrix)
    return float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[0])


# ============== Stationary regime bounds ==============

def l2_bound(J: Function, theta_star: ParameterVector, basis: FeatureBasis, mdp: StationaryRegimeMDP) -> ErrorBoundReport:
    """||J - theta*^T Phi||_{2,pi} <= ||J - Pi J||_{2,pi} / (1 - beta)"""
    values = _values(J)
    weights = mdp.pi_state
    projected = basis.matrix @ project(values, weights, basis)
    lhs = l2_norm(values - basis.values(theta_star), weights)
    projection_error = l2_norm(values - projected, weights)
    return ErrorBoundReport.build(
        "l2_bound",
        lhs,
        projection_error / (1.0 - mdp.beta),
        beta=mdp.beta,
        projection_error=projection_error,
        d=basis.dimension,
    )


def near_linearity(J: Function, basis: FeatureBasis, support: Optional[np.ndarray] = None) -> tuple[float, ParameterVector]:
    """lambda_hat = min_theta max_s |J(s) - theta^T Phi(s)| by linear programming"""
    values = _values(J).reshape(-1)
    phi = basis.matrix
    if support is not None:
        values, phi = values[support], phi[support]
    n, d = phi.shape
    # variables (theta, lambda): minimize lambda with |J - Phi theta| <= lambda
    objective = np.zeros(d + 1)
    objective[-1] = 1.0
    ones = np.ones((n, 1))
    constraints = np.vstack([np.hstack([-phi, -ones]), np.hstack([phi, -ones])])
    bounds_rhs = np.concatenate([-values, values])
    result = linprog(
        objective,
        A_ub=constraints,
        b_ub=bounds_rhs,
        bounds=[(None, None)] * d + [(0.0, None)],
        method="highs",
    )
    if not result.success:
        raise ValidationError(f"near-linearity program failed: {result.message}")
    theta = result.x[:d]
    # the reported constant is the residual of the returned theta
    lam = float(np.abs(values - phi @ theta).max()) if n else 0.0
    return lam, theta


def uniform_bound(
    J: Function,
    theta_star: ParameterVector,
    basis: FeatureBasis,
    mdp: StationaryRegimeMDP,
    lambda_hat: Optional[float] = None,
) -> ErrorBoundReport:
    """max_s |J(s) - theta*^T Phi(s)| <= lambda (1 + ((2-beta)/(1-beta)) sqrt(d / sigma_min))"""
    values = _values(J)
    support = _support(mdp)
    if lambda_hat is None:
        lambda_hat, _ = near_linearity(values, basis, support)
    sigma_min = stationary_sigma_min(basis, mdp)
    if sigma_min <= settings.SINGULAR_TOL:
        raise ValidationError(f"uniform bound needs a non-singular Gram matrix, sigma_min={sigma_min:.3g}")
    lhs = float(np.abs(values - basis.values(theta_star))[support].max())
    rhs = lambda_hat * _uniform_constant(mdp.beta, basis.dimension, sigma_min)
    return ErrorBoundReport.build(
        "uniform_bound",
        lhs,
        rhs,
        beta=mdp.beta,
        lambda_hat=float(lambda_hat),
        d=basis.dimension,
        sigma_min=sigma_min,
    )


# ============== POMDP values ==============

@dataclass(frozen=True)
class WindowValues:
    """J_beta(z_0, gamma^N) averaged over the initial window law"""

    mean: float
    windows: tuple[int, ...]
    probabilities: np.ndarray
    values: np.ndarray
    posteriors: np.ndarray


def exact_policy_value(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    beta: float,
    prior: Optional[np.ndarray] = None,
    burn_in: Optional[np.ndarray] = None,
    memory_n: Optional[int] = None,
) -> WindowValues:
    """
    Discounted cost of the window policy on the true model: v = (I - beta P)^{-1} c
    on the joint chain, averaged over x_0 and u_0 given each initial window.
    """
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"discount beta must lie in (0, 1), got {beta}")
    codec = codec_for_policy(spec, policy, memory_n)
    prior = spec.prior if prior is None else np.asarray(prior, float)
    burn_in = np.full(spec.num_actions, 1.0 / spec.num_actions) if burn_in is None else np.asarray(burn_in, float)

    chain = build_joint_chain(spec, policy, codec.memory_n)
    n_states, n_actions = spec.num_states, spec.num_actions
    stage_cost = np.tile(spec.cost.reshape(-1), codec.size)
    joint_values = np.linalg.solve(np.eye(chain.shape[0]) - beta * chain, stage_cost)
    joint_values = joint_values.reshape(codec.size, n_states, n_actions)

    start = initial_windows(spec, prior, burn_in, codec.memory_n)
    windows = tuple(h for h, _, _ in start)
    probabilities = np.array([p for _, p, _ in start])
    posteriors = np.array([post for _, _, post in start])
    values = np.array([
        float(post @ joint_values[h] @ policy.table[h]) for h, _, post in start
    ])
    return WindowValues(
        mean=float(probabilities @ values),
        windows=windows,
        probabilities=probabilities,
        values=values,
        posteriors=posteriors,
    )


def pomdp_value_bound(
    spec: PomdpSpec,
    policy_n: FiniteMemoryPolicy,
    basis: FeatureBasis,
    theta_star: ParameterVector,
    fs: FilterStabilityReport,
    lambda_hat: float,
    sigma_min: float,
    beta: float,
    prior: Optional[np.ndarray] = None,
    burn_in: Optional[np.ndarray] = None,
    memory_n: Optional[int] = None,
) -> ErrorBoundReport:
    """
    E|J_beta(z_0, gamma^N) - theta*^T Phi(h_0)|
      <= ||c||/(1-beta) sum beta^t L_t + lambda (1 + ((2-beta)/(1-beta)) sqrt(d / sigma_min))
    """
    exact = exact_policy_value(spec, policy_n, beta, prior, burn_in, memory_n)
    approximation = basis.values(theta_star)[list(exact.windows)]
    lhs = float(exact.probabilities @ np.abs(exact.values - approximation))
    filter_term = spec.cost_sup / (1.0 - beta) * fs.discounted_sum
    approximation_term = lambda_hat * _uniform_constant(beta, basis.dimension, sigma_min)
    return ErrorBoundReport.build(
        "pomdp_value_bound",
        lhs,
        filter_term + approximation_term,
        beta=beta,
        cost_sup=spec.cost_sup,
        discounted_loss=fs.discounted_sum,
        lambda_hat=float(lambda_hat),
        d=basis.dimension,
        sigma_min=float(sigma_min),
        lower_estimate=fs.lower_estimate,
    )


def channel_lipschitz(spec: PomdpSpec, points: Optional[np.ndarray] = None) -> float:
    """alpha_Y = max_x max_{y != y'} |O(y|x) - O(y'|x)| / dist(y, y')"""
    alpha = 0.0
    for y in range(spec.num_obs):
        for y_other in range(y + 1, spec.num_obs):
            distance = observation_distance(y, y_other, points)
            if distance <= 0.0:
                raise ValidationError(f"observations {y} and {y_other} are at distance zero")
            gap = np.abs(spec.observation[:, y] - spec.observation[:, y_other]).max()
            alpha = max(alpha, float(gap) / distance)
    return alpha


def pomdp_q_bound(
    spec: PomdpSpec,
    learned_policy: FiniteMemoryPolicy,
    fs_hat: FilterStabilityReport,
    alpha_y: float,
    beta: float,
    prior: Optional[np.ndarray] = None,
    burn_in: Optional[np.ndarray] = None,
    memory_n: Optional[int] = None,
    solver: Optional[BeliefGridSolver] = None,
) -> ErrorBoundReport:
    """
    E|J_beta(z_0, gamma^N) - J*_beta(z_0)|
      <= 2||c||/(1-beta) sum beta^t L_hat_t + beta/(1-beta)^2 ||c|| alpha_Y L_Y

    ``learned_policy`` acts on the windows of ``spec`` (a binned learner is
    lifted through its quantizer first); J* comes from the belief grid and
    its interpolation error is a tolerance.
    """
    solver = solver or BeliefGridSolver(spec, beta)
    if solver.values is None:
        solver.solve()

    exact = exact_policy_value(spec, learned_policy, beta, prior, burn_in, memory_n)
    optimal = np.array([solver.value(posterior) for posterior in exact.posteriors])
    lhs = float(exact.probabilities @ np.abs(exact.values - optimal))

    resolution = fs_hat.resolution or 0.0
    cost_sup = spec.cost_sup
    rhs = 2.0 * cost_sup / (1.0 - beta) * fs_hat.discounted_sum
    rhs += beta / (1.0 - beta) ** 2 * cost_sup * alpha_y * resolution
    return ErrorBoundReport.build(
        "pomdp_q_bound",
        lhs,
        rhs,
        tolerance=solver.interpolation_error,
        beta=beta,
        cost_sup=cost_sup,
        discounted_loss=fs_hat.discounted_sum,
        resolution=resolution,
        alpha_y=float(alpha_y),
        grid_resolution=solver.resolution,
        lower_estimate=fs_hat.lower_estimate,
    )


# ============== Rollouts ==============

def rollout_horizon(beta: float, cost_sup: float, tol: Optional[float] = None) -> int:
    """Smallest H with beta^H ||c|| / (1 - beta) < tol"""
    tol = settings.TAIL_TOLERANCE if tol is None else tol
    if cost_sup <= 0.0:
        return 1
    horizon = max(1, math.ceil(math.log(tol * (1.0 - beta) / cost_sup) / math.log(beta)))
    while beta**horizon * cost_sup / (1.0 - beta) >= tol:
        horizon += 1
    return horizon


def _sample(cumulative: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF sampling; cumulative has one row per draw"""
    picks = (draws[:, None] >= cumulative).sum(axis=1)
    return np.minimum(picks, cumulative.shape[1] - 1)


def rollout_value(
    spec: PomdpSpec,
    policy: FiniteMemoryPolicy,
    beta: float,
    n_rollouts: int,
    seed: int,
    horizon: Optional[int] = None,
    prior: Optional[np.ndarray] = None,
    burn_in: Optional[np.ndarray] = None,
    memory_n: Optional[int] = None,
) -> RolloutEstimate:
    """
    Monte-Carlo discounted cost from z_0 = (prior, burn-in window), all
    rollouts advanced together. Burn-in costs are not counted.
    """
    if n_rollouts < 1:
        raise ValidationError(f"n_rollouts must be at least 1, got {n_rollouts}")
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"discount beta must lie in (0, 1), got {beta}")
    codec = codec_for_policy(spec, policy, memory_n)
    horizon = rollout_horizon(beta, spec.cost_sup) if horizon is None else int(horizon)
    prior = spec.prior if prior is None else np.asarray(prior, float)
    burn_in = np.full(spec.num_actions, 1.0 / spec.num_actions) if burn_in is None else np.asarray(burn_in, float)

    rng = make_rng(seed, "rollout")
    trans_cum = np.cumsum(spec.transition, axis=2)
    obs_cum = np.cumsum(spec.observation, axis=1)
    policy_cum = np.cumsum(policy.table, axis=1)
    shift = codec.shift_table

    x = _sample(np.tile(np.cumsum(prior), (n_rollouts, 1)), rng.random(n_rollouts))
    observations = [_sample(obs_cum[x], rng.random(n_rollouts))]
    actions = []
    for _ in range(codec.memory_n):
        u = _sample(np.tile(np.cumsum(burn_in), (n_rollouts, 1)), rng.random(n_rollouts))
        actions.append(u)
        x = _sample(trans_cum[x, u], rng.random(n_rollouts))
        observations.append(_sample(obs_cum[x], rng.random(n_rollouts)))

    # encode the first windows (newest first) without per-rollout objects
    h = np.zeros(n_rollouts, dtype=np.int64)
    for y in observations[::-1]:
        h = h * codec.num_obs + y
    act = np.zeros(n_rollouts, dtype=np.int64)
    for u in actions[::-1]:
        act = act * codec.num_actions + u
    h = h * codec.num_actions**codec.memory_n + act

    totals = np.zeros(n_rollouts)
    discount = 1.0
    for _ in range(horizon):
        u = _sample(policy_cum[h], rng.random(n_rollouts))
        totals += discount * spec.cost[x, u]
        x = _sample(trans_cum[x, u], rng.random(n_rollouts))
        y = _sample(obs_cum[x], rng.random(n_rollouts))
        h = shift[h, y, u]
        discount *= beta

    std_error = float(totals.std(ddof=1) / math.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return RolloutEstimate(
        mean=float(totals.mean()),
        std_error=std_error,
        n_rollouts=n_rollouts,
        horizon=horizon,
        truncation_bias_bound=beta**horizon * spec.cost_sup / (1.0 - beta),
    )
