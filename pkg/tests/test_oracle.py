"""
Invariant law, stationary regime MDP, fixed points and diagnostics
"""
import numpy as np
import pytest

from app.core.errors import CoverageError, RankDeficiencyError, ReducibleChainError, ValidationError
from app.core.rng import make_rng
from app.models.features import FeatureBasis, QuantizerBasis
from app.models.pomdp import FiniteMemoryPolicy, Predictor
from app.services.model import build_joint_chain, joint_marginals
from app.services.oracle import (
    aggregate_mdp,
    approximate_model,
    bellman_optimal,
    bellman_policy,
    build_stationary_mdp,
    contraction_estimate,
    contraction_ratio,
    covariance_profile,
    expected_td_update,
    gordin_diagnostic,
    invariant_distribution,
    mixing_profile,
    policy_value,
    projected_policy_iteration,
    projected_q_iteration,
    solve_projected_fixed_point,
    stationary_window_model,
    value_iteration,
)

from tests.conftest import make_one_state


# ============== Invariant distribution ==============

def test_invariant_distribution_is_stationary(chain, pi_joint):
    assert pi_joint.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(pi_joint @ chain - pi_joint).sum() < 1e-12


def test_hidden_state_marginal(chain2, pi_joint):
    # under uniform actions P(X = 0) = (0.9 + 0.2) / 2
    pi_x = joint_marginals(pi_joint, chain2, 8).sum(axis=(0, 2))
    assert pi_x == pytest.approx([0.55, 0.45], abs=1e-10)


def test_reducible_chain_is_rejected():
    with pytest.raises(ReducibleChainError):
        invariant_distribution(np.eye(2))


def test_periodic_chain_is_rejected():
    with pytest.raises(ReducibleChainError):
        invariant_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_chain_rows_must_be_stochastic():
    with pytest.raises(ValidationError):
        invariant_distribution(np.array([[0.5, 0.4], [0.5, 0.5]]))


# ============== Stationary regime MDP ==============

def test_stationary_cost_is_the_window_posterior_cost(mdp):
    # window 0: y_t = 0, y_{t-1} = 0, u_{t-1} = 0; P(X_t | h) = (0.72, 0.02) / 0.74
    assert mdp.cost[0] == pytest.approx([0.02 / 0.74, 0.72 / 0.74], abs=1e-10)


def test_stationary_kernel(mdp, codec):
    # next window (y_{t+1}, y_t, u): P(y_{t+1} = 0 | u = 0) = 0.9 * 0.8 + 0.1 * 0.2
    assert mdp.kernel[0, 0, codec.shift_index(0, 0, 0)] == pytest.approx(0.74, abs=1e-10)
    assert mdp.kernel.sum(axis=2) == pytest.approx(np.ones((8, 2)), abs=1e-12)
    assert mdp.null_pairs == ()


def test_stationary_weights_are_invariant_under_the_kernel(mdp):
    pushed = np.einsum("su,sut->t", mdp.pi_sa, mdp.kernel)
    assert pushed == pytest.approx(mdp.pi_state, abs=1e-12)
    assert mdp.pi_sa == pytest.approx(mdp.pi_state[:, None] / 2, abs=1e-12)


def test_null_pairs_and_coverage(chain2, codec):
    policy = FiniteMemoryPolicy.deterministic([0] * codec.size, 2)
    chain = build_joint_chain(chain2, policy, 1)
    pi_joint = invariant_distribution(chain)
    mdp = build_stationary_mdp(chain, pi_joint, chain2, 0.8)
    # action 1 is never played, and windows remembering it are never entered
    assert all(u == 1 or mdp.pi_state[s] == 0.0 for s, u in mdp.null_pairs)
    assert len(mdp.null_pairs) == 8 + 4
    with pytest.raises(CoverageError):
        build_stationary_mdp(chain, pi_joint, chain2, 0.8, require_coverage=True)


def test_approximate_model_matches_stationary_mdp_on_chain2(chain2, uniform_policy, mdp):
    # state-independent transitions: the predictor only matters through T(.|u)
    model = approximate_model(chain2, uniform_policy, Predictor(np.array([0.55, 0.45])), 1, 0.8)
    assert model.cost == pytest.approx(mdp.cost, abs=1e-10)
    assert model.kernel == pytest.approx(mdp.kernel, abs=1e-10)


def test_stationary_window_model_of_chain2(chain2, uniform_policy, mdp):
    model = approximate_model(chain2, uniform_policy, Predictor(np.array([0.55, 0.45])), 1, 0.8)
    stationary = stationary_window_model(model, uniform_policy)
    assert stationary.pi_state == pytest.approx(mdp.pi_state, abs=1e-10)
    assert stationary.pi_sa == pytest.approx(mdp.pi_sa, abs=1e-10)


def test_stationary_window_model_under_window_dependent_actions(chain2):
    policy = FiniteMemoryPolicy(make_rng(5, "sweep").dirichlet(np.ones(2), size=8))
    model = approximate_model(chain2, policy, Predictor(np.array([0.55, 0.45])), 1, 0.8)
    stationary = stationary_window_model(model, policy)
    assert stationary.pi_state @ model.policy_kernel(policy) == pytest.approx(stationary.pi_state, abs=1e-12)
    assert stationary.pi_sa.sum(axis=1) == pytest.approx(stationary.pi_state)
    assert stationary.null_pairs == ()


def test_aggregate_with_identity_bins_is_the_mdp(mdp):
    quantizer = QuantizerBasis.from_bins(np.arange(8), [0, 1])
    aggregated = aggregate_mdp(mdp, quantizer)
    assert aggregated.cost == pytest.approx(mdp.cost, abs=1e-12)
    assert aggregated.kernel == pytest.approx(mdp.kernel, abs=1e-12)


def test_aggregate_bins_are_weighted_averages(mdp):
    quantizer = QuantizerBasis.from_bins([0, 0, 1, 1, 2, 2, 3, 3], [0, 1])
    aggregated = aggregate_mdp(mdp, quantizer)
    assert aggregated.num_states == 4
    weights = mdp.pi_sa[[0, 1], 0]
    assert aggregated.cost[0, 0] == pytest.approx(weights @ mdp.cost[[0, 1], 0] / weights.sum())
    assert aggregated.kernel.sum(axis=2) == pytest.approx(np.ones((4, 2)), abs=1e-12)


# ============== Bellman operators ==============

def test_policy_value_is_the_bellman_fixed_point(mdp, uniform_policy):
    values = policy_value(mdp, uniform_policy)
    assert bellman_policy(values, mdp, uniform_policy).values == pytest.approx(values.values, abs=1e-12)


def test_one_state_value():
    spec = make_one_state()
    policy = FiniteMemoryPolicy.uniform(1, 1)
    chain = build_joint_chain(spec, policy, 0)
    mdp = build_stationary_mdp(chain, invariant_distribution(chain), spec, 0.8)
    assert policy_value(mdp, policy).values == pytest.approx([5.0])


def test_value_iteration_reaches_q_star(mdp):
    q_star, iterations, residual = value_iteration(mdp)
    assert iterations > 1
    assert bellman_optimal(q_star, mdp).values == pytest.approx(q_star.values, abs=1e-9)
    # the greedy policy of Q* is no worse than uniform exploration
    greedy = FiniteMemoryPolicy.deterministic(q_star.greedy(), 2)
    uniform = FiniteMemoryPolicy.uniform(8, 2)
    assert np.all(policy_value(mdp, greedy).values <= policy_value(mdp, uniform).values + 1e-8)


# ============== Projected fixed point ==============

def test_fixed_point_residual(mdp, quantizer4, uniform_policy):
    solution = solve_projected_fixed_point(mdp, quantizer4, uniform_policy)
    assert solution.residual < 1e-8
    assert solution.linear_residual < 1e-10
    assert solution.sigma_min_sym > 0.0


def test_fixed_point_agrees_with_projected_iteration(mdp, quantizer4, uniform_policy):
    solution = solve_projected_fixed_point(mdp, quantizer4, uniform_policy)
    iterated, iterations = projected_policy_iteration(mdp, quantizer4, uniform_policy)
    assert np.abs(iterated - solution.theta).max() < 1e-8
    assert iterations > 1


def test_expected_update_vanishes_at_the_fixed_point(mdp, quantizer4, uniform_policy):
    solution = solve_projected_fixed_point(mdp, quantizer4, uniform_policy)
    update = expected_td_update(mdp, quantizer4, uniform_policy, solution.theta)
    assert np.linalg.norm(update) < 1e-8
    # away from theta* the update is -(A theta - b)
    theta = solution.theta + 0.3
    away = expected_td_update(mdp, quantizer4, uniform_policy, theta)
    assert away == pytest.approx(-(solution.A @ theta - solution.b), abs=1e-12)


def test_indicator_fixed_point_is_the_policy_value(mdp, uniform_policy):
    indicator = QuantizerBasis.from_bins(np.arange(8))
    solution = solve_projected_fixed_point(mdp, indicator, uniform_policy)
    assert solution.theta == pytest.approx(policy_value(mdp, uniform_policy).values, abs=1e-10)


def test_singular_fixed_point_system():
    spec = make_one_state()
    policy = FiniteMemoryPolicy.uniform(1, 1)
    chain = build_joint_chain(spec, policy, 0)
    mdp = build_stationary_mdp(chain, invariant_distribution(chain), spec, 0.8)
    basis = FeatureBasis(np.array([[1.0, 1.0]]))
    with pytest.raises(RankDeficiencyError, match="singular"):
        solve_projected_fixed_point(mdp, basis, policy)


# ============== Contraction ==============

def test_contraction_ratio_bounded_by_beta(mdp, quantizer4, uniform_policy):
    report = contraction_estimate(mdp, quantizer4, uniform_policy, n_pairs=100, seed=0)
    assert report.n_evaluated == 100
    assert report.holds
    assert report.max_ratio <= 0.8 + 1e-9


def test_constant_shift_contracts_by_exactly_beta(mdp, quantizer4, uniform_policy):
    f = np.linspace(0.0, 1.0, 8)
    ratio = contraction_ratio(mdp, quantizer4, uniform_policy, f, f + 1.0)
    assert ratio == pytest.approx(0.8, abs=1e-10)


def test_identical_functions_are_skipped(mdp, quantizer4, uniform_policy):
    f = np.ones(8)
    assert contraction_ratio(mdp, quantizer4, uniform_policy, f, f) is None


# ============== Projected Q iteration ==============

def test_projected_q_iteration_with_indicator_is_value_iteration(mdp):
    basis = QuantizerBasis.from_bins(np.arange(8), [0, 1])
    theta, converged, _ = projected_q_iteration(mdp, basis)
    q_star, _, _ = value_iteration(mdp)
    assert converged
    assert theta == pytest.approx(q_star.values.reshape(-1), abs=1e-9)


# ============== Mixing ==============

def test_mixing_profile_is_summable(chain, pi_joint):
    profile = mixing_profile(chain, pi_joint, 200)
    assert len(profile.alpha_bar) == 201
    assert profile.summable
    assert profile.converged_at is not None and profile.converged_at < 200
    assert profile.alpha_bar[0] == pytest.approx(float(pi_joint @ (1.0 - pi_joint)))
    assert profile.second_eigenvalue_modulus < 1.0


def test_covariance_bound_holds(chain, pi_joint):
    profile = mixing_profile(chain, pi_joint, 50)
    rng = make_rng(1, "covariance")
    for f in rng.uniform(-1.0, 1.0, size=(100, chain.shape[0])):
        check = covariance_profile(chain, pi_joint, f, 50, alpha_bar=profile.alpha_bar)
        assert check.holds


def test_gordin_sums_stabilize(chain, pi_joint, chain2, quantizer4):
    report = gordin_diagnostic(chain, pi_joint, quantizer4, chain2, 0.8, k_max=200)
    assert not report.sampled_only
    assert report.stabilized_at is not None
    assert np.isfinite(report.a_sup) and np.isfinite(report.b_sup)
    assert report.a_partial_sums == sorted(report.a_partial_sums)


def test_gordin_with_sampled_functions(chain, pi_joint, chain2, quantizer4):
    functions = make_rng(2, "sweep").uniform(-1.0, 1.0, size=(chain.shape[0], 3))
    report = gordin_diagnostic(chain, pi_joint, quantizer4, chain2, 0.8, k_max=100, functions=functions)
    assert report.sampled_only
    assert report.b_sup == 0.0
    assert len(report.a_partial_sums) == 101
