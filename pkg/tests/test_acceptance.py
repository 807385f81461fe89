"""
Long-running end-to-end checks on the shipped experiments

Run with ``pytest -m slow``.
"""
import numpy as np
import pytest

from app.core.rng import make_rng
from app.models.features import QuantizerBasis
from app.models.learners import LearningRateSchedule
from app.models.pomdp import FiniteMemoryPolicy, PomdpSpec, Predictor
from app.services.analysis import (
    channel_lipschitz,
    l2_bound,
    near_linearity,
    pomdp_q_bound,
    pomdp_value_bound,
    stationary_sigma_min,
    uniform_bound,
)
from app.services.filter_stability import filter_stability
from app.services.learners import greedy_policy, run_tabular_q, run_td0
from app.services.model import Simulator, build_joint_chain, joint_marginals
from app.services.oracle import (
    aggregate_mdp,
    approximate_model,
    build_stationary_mdp,
    invariant_distribution,
    policy_value,
    solve_projected_fixed_point,
    stationary_window_model,
    value_iteration,
)


pytestmark = pytest.mark.slow

TD_SCHEDULE = LearningRateSchedule(a=1.0, t0=100.0, rho=0.75)
SLOW_SCHEDULE = LearningRateSchedule(a=2.0, t0=200.0, rho=0.6)


@pytest.fixture
def td_oracle(mdp, quantizer4, uniform_policy):
    return solve_projected_fixed_point(mdp, quantizer4, uniform_policy).theta


def test_simulated_frequencies_match_the_stationary_mdp(chain2, uniform_policy, mdp):
    windows = np.zeros(8)
    pairs = np.zeros((8, 2))
    costs = np.zeros((8, 2))
    moves = np.zeros((8, 2, 8))
    for block in Simulator(chain2, uniform_policy, seed=0).chunks(10_000_000):
        windows += np.bincount(block.s, minlength=8)
        cell = block.s * 2 + block.action
        pairs += np.bincount(cell, minlength=16).reshape(8, 2)
        costs += np.bincount(cell, weights=block.cost, minlength=16).reshape(8, 2)
        moves += np.bincount(cell * 8 + block.s_next, minlength=128).reshape(8, 2, 8)
    assert np.abs(windows / windows.sum() - mdp.pi_state).max() < 3e-3
    assert np.abs(costs / pairs - mdp.cost).max() < 3e-3
    assert np.abs(moves / pairs[:, :, None] - mdp.kernel).max() < 3e-3


def test_td_reaches_the_projected_fixed_point(chain2, uniform_policy, quantizer4, td_oracle):
    relative = []
    for seed in range(5):
        trace = run_td0(
            chain2, uniform_policy, quantizer4, TD_SCHEDULE, 0.8, 2_000_000, seed, theta_star=td_oracle
        )
        relative.append(trace.final_distance / np.linalg.norm(td_oracle))
    assert sum(r < 1e-2 for r in relative) >= 4


def test_td_limit_does_not_depend_on_the_schedule(chain2, uniform_policy, quantizer4, td_oracle):
    finals = {}
    for name, schedule in (("fast", TD_SCHEDULE), ("slow", SLOW_SCHEDULE)):
        finals[name] = np.mean(
            [run_td0(chain2, uniform_policy, quantizer4, schedule, 0.8, 2_000_000, seed).final for seed in range(3)],
            axis=0,
        )
    gap = np.linalg.norm(finals["fast"] - finals["slow"])
    assert gap / np.linalg.norm(td_oracle) < 2e-2


def test_tabular_q_approaches_the_aggregated_optimum(chain2, uniform_policy, mdp):
    # visit-count rates leave a bias decaying like n^-(1 - beta)
    quantizer = QuantizerBasis.from_bins(np.arange(8), [0, 1])
    q_star, _, _ = value_iteration(aggregate_mdp(mdp, quantizer))
    trace = run_tabular_q(chain2, uniform_policy, quantizer, 0.8, 5_000_000, seed=0, q_star=q_star)
    assert not trace.starved
    assert trace.final_distance < trace.distances[0]
    assert trace.final_distance < 0.25


def sweep_model(rng, num_states=None) -> PomdpSpec:
    n_states, n_obs, n_actions = rng.integers(2, 4, size=3).tolist()
    n_states = n_states if num_states is None else num_states
    return PomdpSpec(
        transition=rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
        observation=rng.dirichlet(np.ones(n_obs), size=n_states),
        cost=rng.uniform(0.0, 1.0, size=(n_states, n_actions)),
        prior=rng.dirichlet(np.ones(n_states)),
    )


def stationary_marginal(spec, policy, memory_n, beta):
    chain = build_joint_chain(spec, policy, memory_n)
    pi_joint = invariant_distribution(chain)
    mdp = build_stationary_mdp(chain, pi_joint, spec, beta)
    pi_x = joint_marginals(pi_joint, spec, spec.window_codec(memory_n).size).sum(axis=(0, 2))
    return mdp, pi_x / pi_x.sum()


def test_bounds_hold_across_random_models():
    rng = make_rng(2024, "sweep")
    for case in range(20):
        spec = sweep_model(rng)
        memory_n = case % 3
        beta = float(rng.uniform(0.5, 0.9))
        codec = spec.window_codec(memory_n)
        policy = FiniteMemoryPolicy(rng.dirichlet(np.ones(spec.num_actions), size=codec.size))
        bins = np.arange(codec.size) % min(3, codec.size)
        basis = QuantizerBasis.from_bins(rng.permutation(bins))

        mdp, pi_x = stationary_marginal(spec, policy, memory_n, beta)
        theta_star = solve_projected_fixed_point(mdp, basis, policy).theta
        values = policy_value(mdp, policy)
        assert l2_bound(values, theta_star, basis, mdp).holds, case
        assert uniform_bound(values, theta_star, basis, mdp).holds, case

        approximate = stationary_window_model(
            approximate_model(spec, policy, Predictor(pi_x), memory_n, beta), policy
        )
        theta_approx = solve_projected_fixed_point(approximate, basis, policy).theta
        lambda_hat, _ = near_linearity(policy_value(approximate, policy), basis)
        fs = filter_stability(spec, Predictor(pi_x), [Predictor(spec.prior)], memory_n, beta=beta, policies=[policy])
        report = pomdp_value_bound(
            spec, policy, basis, theta_approx, fs, lambda_hat, stationary_sigma_min(basis, approximate), beta,
            memory_n=memory_n,
        )
        assert report.holds, case


def test_quantized_q_bound_holds_across_random_models():
    rng = make_rng(2025, "sweep")
    for case in range(8):
        spec = sweep_model(rng, num_states=2 + case % 2)
        memory_n = 1 if spec.num_obs == spec.num_actions == 2 else 0
        beta = float(rng.uniform(0.5, 0.9))
        codec = spec.window_codec(memory_n)
        exploration = FiniteMemoryPolicy.uniform(codec.size, spec.num_actions)
        bins = list(range(spec.num_obs))
        quantizer = QuantizerBasis.from_observation_bins(codec, bins, spec.num_actions)

        mdp, pi_x = stationary_marginal(spec, exploration, memory_n, beta)
        q_star, _, _ = value_iteration(aggregate_mdp(mdp, quantizer))
        fs_hat = filter_stability(
            spec, Predictor(pi_x), [Predictor(spec.prior)], memory_n, beta=beta, observation_bins=bins
        )
        report = pomdp_q_bound(
            spec, greedy_policy(q_star, quantizer), fs_hat, channel_lipschitz(spec), beta, memory_n=memory_n
        )
        assert report.inputs["grid_resolution"] == 1000, case
        assert report.holds, case
