"""
Error bounds, exact POMDP values, rollouts and the belief grid
"""
import numpy as np
import pytest

from app.core.config import settings
from app.core.errors import EnumerationBudgetError, ValidationError
from app.core.rng import make_rng
from app.models.features import FeatureBasis, QuantizerBasis
from app.models.pomdp import FiniteMemoryPolicy, PomdpSpec, Predictor
from app.services.analysis import (
    _uniform_constant,
    channel_lipschitz,
    exact_policy_value,
    l2_bound,
    near_linearity,
    pomdp_q_bound,
    pomdp_value_bound,
    rollout_horizon,
    rollout_value,
    stationary_sigma_min,
    uniform_bound,
)
from app.services.belief_grid import BeliefGridSolver, fitting_resolution, grid_size
from app.services.filter_stability import filter_stability
from app.services.learners import greedy_policy
from app.services.model import build_joint_chain, joint_marginals
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

from tests.conftest import make_one_state


def stationary_setup(spec, policy, beta=0.8):
    chain = build_joint_chain(spec, policy, 1)
    pi_joint = invariant_distribution(chain)
    return pi_joint, build_stationary_mdp(chain, pi_joint, spec, beta)


# ============== Stationary regime bounds ==============

def test_uniform_constant():
    # lambda = 1, beta = 1/2, d = 4, sigma_min = 1: 1 + 3 * 2
    assert _uniform_constant(0.5, 4, 1.0) == pytest.approx(7.0)


def test_bounds_are_tight_for_representable_values(mdp, quantizer4):
    theta = np.array([1.0, -2.0, 0.5, 3.0])
    values = quantizer4.values(theta)
    report = l2_bound(values, theta, quantizer4, mdp)
    assert report.lhs == pytest.approx(0.0, abs=1e-12)
    assert report.rhs == pytest.approx(0.0, abs=1e-12)
    assert report.holds
    lam, fitted = near_linearity(values, quantizer4)
    assert lam == pytest.approx(0.0, abs=1e-9)
    assert fitted == pytest.approx(theta, abs=1e-9)


def test_chain2_bounds_hold_for_uniform_exploration(mdp, quantizer4, uniform_policy):
    solution = solve_projected_fixed_point(mdp, quantizer4, uniform_policy)
    values = policy_value(mdp, uniform_policy)
    l2 = l2_bound(values, solution.theta, quantizer4, mdp)
    uniform = uniform_bound(values, solution.theta, quantizer4, mdp)
    assert l2.holds and l2.slack >= -1e-9
    assert uniform.holds and uniform.slack >= -1e-9
    assert uniform.inputs["d"] == 4


def test_chain2_bounds_hold_for_random_policies(chain2, quantizer4):
    rng = make_rng(0, "sweep")
    for _ in range(20):
        policy = FiniteMemoryPolicy(rng.dirichlet(np.ones(2), size=8))
        _, mdp = stationary_setup(chain2, policy)
        solution = solve_projected_fixed_point(mdp, quantizer4, policy)
        values = policy_value(mdp, policy)
        assert l2_bound(values, solution.theta, quantizer4, mdp).holds
        assert uniform_bound(values, solution.theta, quantizer4, mdp).holds


def test_near_linearity_of_a_two_level_function():
    basis = FeatureBasis.constant(3)
    lam, theta = near_linearity(np.array([0.0, 1.0, 4.0]), basis)
    assert lam == pytest.approx(2.0)
    assert theta == pytest.approx([2.0])


def test_near_linearity_on_a_support():
    basis = FeatureBasis.constant(3)
    lam, _ = near_linearity(np.array([0.0, 1.0, 40.0]), basis, support=np.array([True, True, False]))
    assert lam == pytest.approx(0.5)


# ============== POMDP values ==============

def test_exact_value_of_one_state():
    spec = make_one_state()
    values = exact_policy_value(spec, FiniteMemoryPolicy.uniform(1, 1), 0.8)
    assert values.mean == pytest.approx(5.0)
    assert values.windows == (0,)


def test_exact_value_averages_initial_windows(chain2, uniform_policy):
    values = exact_policy_value(chain2, uniform_policy, 0.8)
    assert values.probabilities.sum() == pytest.approx(1.0)
    assert values.mean == pytest.approx(float(values.probabilities @ values.values))


def test_rollout_of_one_state_is_exact():
    spec = make_one_state()
    estimate = rollout_value(spec, FiniteMemoryPolicy.uniform(1, 1), 0.8, n_rollouts=100, seed=0)
    assert estimate.mean == pytest.approx(5.0, abs=1e-6)
    assert estimate.std_error == 0.0
    assert estimate.truncation_bias_bound < 1e-6


def test_rollout_agrees_with_exact_value(chain2, uniform_policy):
    exact = exact_policy_value(chain2, uniform_policy, 0.8)
    estimate = rollout_value(chain2, uniform_policy, 0.8, n_rollouts=20_000, seed=0)
    assert abs(estimate.mean - exact.mean) <= 3.0 * estimate.std_error + estimate.truncation_bias_bound


def test_rollout_validation(chain2, uniform_policy):
    with pytest.raises(ValidationError):
        rollout_value(chain2, uniform_policy, 0.8, n_rollouts=0, seed=0)
    with pytest.raises(ValidationError):
        rollout_value(chain2, uniform_policy, 1.0, n_rollouts=10, seed=0)


def test_rollout_horizon():
    horizon = rollout_horizon(0.8, 1.0)
    assert 0.8**horizon / 0.2 < 1e-6 <= 0.8 ** (horizon - 1) / 0.2
    assert rollout_horizon(0.8, 0.0) == 1


def approximate_fixed_point(spec, policy, basis, pi_x, memory_n, beta):
    model = approximate_model(spec, policy, Predictor(pi_x / pi_x.sum()), memory_n, beta)
    stationary = stationary_window_model(model, policy)
    theta = solve_projected_fixed_point(stationary, basis, policy).theta
    lambda_hat, _ = near_linearity(policy_value(stationary, policy), basis)
    return theta, lambda_hat, stationary_sigma_min(basis, stationary)


def test_pomdp_value_bound_on_chain2(chain2, uniform_policy, quantizer4):
    pi_joint, _ = stationary_setup(chain2, uniform_policy)
    pi_x = joint_marginals(pi_joint, chain2, 8).sum(axis=(0, 2))
    fs = filter_stability(chain2, Predictor(pi_x / pi_x.sum()), [Predictor(chain2.prior)], 1, beta=0.8)
    theta, lambda_hat, sigma_min = approximate_fixed_point(chain2, uniform_policy, quantizer4, pi_x, 1, 0.8)
    report = pomdp_value_bound(chain2, uniform_policy, quantizer4, theta, fs, lambda_hat, sigma_min, 0.8)
    assert report.holds
    assert report.inputs["discounted_loss"] == pytest.approx(fs.discounted_sum)


def test_pomdp_value_bound_under_window_dependent_policies(chain2, quantizer4):
    rng = make_rng(11, "sweep")
    for case in range(10):
        policy = FiniteMemoryPolicy(rng.dirichlet(np.ones(2), size=8))
        pi_joint, _ = stationary_setup(chain2, policy)
        pi_x = joint_marginals(pi_joint, chain2, 8).sum(axis=(0, 2))
        fs = filter_stability(
            chain2, Predictor(pi_x / pi_x.sum()), [Predictor(chain2.prior)], 1, beta=0.8, policies=[policy]
        )
        theta, lambda_hat, sigma_min = approximate_fixed_point(chain2, policy, quantizer4, pi_x, 1, 0.8)
        report = pomdp_value_bound(chain2, policy, quantizer4, theta, fs, lambda_hat, sigma_min, 0.8)
        assert report.holds, case


# ============== Quantized Q bound ==============

def test_channel_lipschitz(chain2):
    assert channel_lipschitz(chain2) == pytest.approx(0.6)
    assert channel_lipschitz(chain2, np.array([[0.0], [2.0]])) == pytest.approx(0.3)


def test_q_bound_is_trivial_without_hidden_state():
    spec = make_one_state(cost=1.0, num_actions=2)
    fs_hat = filter_stability(
        spec, Predictor.uniform(1), [Predictor.uniform(1)], 0, t_max=5, beta=0.8, observation_bins=[0]
    )
    report = pomdp_q_bound(spec, FiniteMemoryPolicy.uniform(1, 2), fs_hat, 0.0, 0.8, memory_n=0)
    assert report.lhs == pytest.approx(0.0, abs=1e-8)
    assert report.holds


def test_q_bound_on_chain2_tabular_limit(chain2, uniform_policy):
    _, mdp = stationary_setup(chain2, uniform_policy)
    quantizer = QuantizerBasis.from_bins(np.arange(8), [0, 1])
    q_star, _, _ = value_iteration(aggregate_mdp(mdp, quantizer))
    fs_hat = filter_stability(
        chain2, Predictor(np.array([0.55, 0.45])), [Predictor(chain2.prior)], 1, beta=0.8, observation_bins=[0, 1]
    )
    solver = BeliefGridSolver(chain2, 0.8)
    report = pomdp_q_bound(
        chain2, greedy_policy(q_star, quantizer), fs_hat, channel_lipschitz(chain2), 0.8, memory_n=1, solver=solver
    )
    assert report.holds
    assert report.inputs["numerical_tolerance"] == pytest.approx(solver.interpolation_error)


# ============== Belief grid ==============

def static_spec(num_states):
    return PomdpSpec(
        transition=np.eye(num_states)[:, None, :],
        observation=np.ones((num_states, 1)),
        cost=np.zeros((num_states, 1)),
        prior=np.full(num_states, 1.0 / num_states),
    )


def test_grid_interpolation_reproduces_the_belief():
    solver = BeliefGridSolver(static_spec(3), 0.8, resolution=10)
    assert solver.size == 66
    for belief in make_rng(3, "sweep").dirichlet(np.ones(3), size=50):
        weights = solver.interpolate_weights(belief)
        assert sum(w for _, w in weights) == pytest.approx(1.0)
        point = sum(w * solver.points[i] for i, w in weights) / 10
        assert point == pytest.approx(belief, abs=1e-12)


def test_default_grid_for_three_states():
    solver = BeliefGridSolver(static_spec(3), 0.8)
    assert solver.resolution == settings.BELIEF_GRID_RESOLUTION == 1000
    assert solver.size == grid_size(1000, 3) == 501_501
    beliefs = make_rng(4, "sweep").dirichlet(np.ones(3), size=200)
    indices, weights = solver.locate(beliefs)
    assert weights.sum(axis=1) == pytest.approx(np.ones(200))
    points = np.einsum("rk,rkx->rx", weights, solver.points[indices]) / 1000
    assert points == pytest.approx(beliefs, abs=1e-10)


def test_default_grid_is_coarsened_to_the_budget():
    solver = BeliefGridSolver(static_spec(4), 0.8)
    budget = settings.BELIEF_GRID_BUDGET
    assert solver.resolution < settings.BELIEF_GRID_RESOLUTION
    assert solver.size == grid_size(solver.resolution, 4) <= budget < grid_size(solver.resolution + 1, 4)


def test_explicit_resolution_over_budget():
    with pytest.raises(EnumerationBudgetError):
        BeliefGridSolver(static_spec(4), 0.8, resolution=1000)
    with pytest.raises(ValidationError):
        BeliefGridSolver(static_spec(3), 0.8, resolution=0)


def test_fitting_resolution():
    assert fitting_resolution(3, 1000, 10**6) == 1000
    assert fitting_resolution(2, 1000, 11) == 10
    with pytest.raises(EnumerationBudgetError):
        fitting_resolution(5, 10, 3)


def test_grid_value_of_constant_cost():
    spec = make_one_state(cost=1.0, num_actions=2)
    solver = BeliefGridSolver(spec, 0.8, resolution=5)
    assert solver.value(np.array([1.0])) == pytest.approx(5.0, abs=1e-9)


def test_grid_value_is_bounded_by_fixed_actions(chain2):
    solver = BeliefGridSolver(chain2, 0.8, resolution=50)
    values = solver.solve()
    assert np.all(values >= -1e-12)
    assert np.all(values <= 1.0 / 0.2 + 1e-9)
