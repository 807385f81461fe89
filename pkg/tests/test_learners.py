"""
TD(0), linear Q-learning and quantized tabular Q-learning
"""
import numpy as np
import pytest

from app.core.errors import ScheduleError, ValidationError
from app.models.features import FeatureBasis, QuantizerBasis
from app.models.learners import ConvergenceTrace, LearningRateSchedule, TabularQState, Td0State
from app.models.pomdp import FiniteMemoryPolicy, TransitionRecord
from app.services.learners import (
    default_checkpoints,
    greedy_policy,
    linear_q_step,
    run_linear_q,
    run_tabular_q,
    run_td0,
    tabular_q_step,
    td0_step,
)
from app.services.model import simulate

from tests.conftest import make_one_state


# ============== Schedules ==============

def test_polynomial_rate():
    schedule = LearningRateSchedule(a=2.0, t0=3.0, rho=1.0)
    assert schedule.rate(0) == pytest.approx(2.0 / 3.0)
    assert schedule.rate(5) == pytest.approx(0.25)


def test_visit_count_rate():
    schedule = LearningRateSchedule(kind="visit_count")
    assert schedule.rate(10, visits=0) == 1.0
    assert schedule.rate(10, visits=3) == 0.25


@pytest.mark.parametrize("kwargs", [{"rho": 0.5}, {"rho": 1.2}, {"a": 0.0}, {"t0": -1.0}])
def test_schedule_outside_robbins_monro(kwargs):
    with pytest.raises(ScheduleError):
        LearningRateSchedule(**kwargs).validate_robbins_monro()


def test_default_checkpoints():
    assert default_checkpoints(100, 20) == list(range(5, 101, 5))
    assert default_checkpoints(3, 20) == [1, 2, 3]
    with pytest.raises(ValidationError):
        default_checkpoints(0)


# ============== Steps ==============

def test_td0_step_arithmetic():
    basis = FeatureBasis(np.array([[1.0, 0.0], [0.5, 0.5]]))
    state = Td0State(np.array([1.0, 2.0]), t=0, schedule=LearningRateSchedule(a=1.0, t0=2.0, rho=1.0))
    rec = TransitionRecord(s_next=1, s=0, cost=0.5, action=0)
    nxt = td0_step(state, rec, basis, beta=0.8)
    # delta = 1 - 0.5 - 0.8 * 1.5 = -0.7, alpha = 1/2
    assert nxt.theta == pytest.approx([1.35, 2.0])
    assert nxt.t == 1


def test_linear_q_step_uses_the_greedy_next_value():
    basis = FeatureBasis(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.0, -0.5]]), num_actions=2)
    state = Td0State(np.array([1.0, 2.0]), schedule=LearningRateSchedule(a=1.0, t0=1.0, rho=1.0))
    rec = TransitionRecord(s_next=1, s=0, cost=1.0, action=1)
    nxt = linear_q_step(state, rec, basis, beta=0.5)
    # next values (0.5, -1.0): min -1.0; delta = 2 - 1 + 0.5 = 1.5, alpha = 1
    assert nxt.theta == pytest.approx([1.0, 0.5])


def test_step_functions_check_the_basis_kind():
    state_basis = FeatureBasis(np.ones((2, 1)))
    rec = TransitionRecord(s_next=0, s=1, cost=0.0, action=0)
    with pytest.raises(ValidationError):
        linear_q_step(Td0State.zeros(1), rec, state_basis, 0.5)
    with pytest.raises(ValidationError):
        td0_step(Td0State.zeros(1), rec, FeatureBasis(np.ones((4, 1)), num_actions=2), 0.5)


def test_tabular_step_overwrites_on_first_visit():
    quantizer = QuantizerBasis.from_bins([0, 1], [0, 0])
    state = TabularQState.initial(2, 1)
    rec = TransitionRecord(s_next=1, s=0, cost=1.0, action=1)
    nxt = tabular_q_step(state, rec, quantizer, beta=0.9)
    assert nxt.q.tolist() == [[1.0], [0.0]]
    assert nxt.counts.tolist() == [[1], [0]]


def test_tabular_step_rate_after_three_visits():
    quantizer = QuantizerBasis.from_bins([0], [0])
    state = TabularQState(np.array([[2.0]]), np.array([[3]]))
    rec = TransitionRecord(s_next=0, s=0, cost=0.0, action=0)
    nxt = tabular_q_step(state, rec, quantizer, beta=0.5)
    # alpha = 1/4, target = 0.5 * 2
    assert nxt.q[0, 0] == pytest.approx(2.0 - 0.25 * (2.0 - 1.0))
    assert nxt.counts[0, 0] == 4


def test_tabular_state_validation():
    with pytest.raises(ValidationError):
        TabularQState(np.zeros((2, 2)), np.zeros((2, 1), dtype=np.int64))
    with pytest.raises(ValidationError):
        TabularQState(np.zeros((1, 1)), np.array([[-1]]))


# ============== Runners ==============

def test_runner_replays_the_step_function(chain2, uniform_policy, quantizer4):
    schedule = LearningRateSchedule()
    trace = run_td0(chain2, uniform_policy, quantizer4, schedule, 0.8, 300, seed=7, checkpoints=[300])
    state = Td0State.zeros(4, schedule)
    for rec in simulate(chain2, uniform_policy, 300, seed=7):
        state = td0_step(state, rec, quantizer4, 0.8)
    assert np.array_equal(trace.final, state.theta)


def test_linear_q_runner_replays_the_step_function(chain2, uniform_policy):
    basis = QuantizerBasis.from_bins([0, 0, 1, 1, 2, 2, 3, 3], [0, 1])
    schedule = LearningRateSchedule()
    trace = run_linear_q(chain2, uniform_policy, basis, schedule, 0.8, 300, seed=2, checkpoints=[300])
    state = Td0State.zeros(basis.dimension, schedule)
    for rec in simulate(chain2, uniform_policy, 300, seed=2):
        state = linear_q_step(state, rec, basis, 0.8)
    assert np.array_equal(trace.final, state.theta)


def test_tabular_runner_replays_the_step_function(chain2, uniform_policy):
    quantizer = QuantizerBasis.from_bins(np.arange(8), [0, 1])
    trace = run_tabular_q(chain2, uniform_policy, quantizer, 0.8, 500, seed=4, checkpoints=[500])
    state = TabularQState.initial(8, 2)
    for rec in simulate(chain2, uniform_policy, 500, seed=4):
        state = tabular_q_step(state, rec, quantizer, 0.8)
    assert np.array_equal(trace.final, state.q.reshape(-1))
    assert np.array_equal(trace.visit_counts, state.counts)


def test_td0_converges_on_one_state():
    spec = make_one_state()
    policy = FiniteMemoryPolicy.uniform(1, 1)
    trace = run_td0(
        spec, policy, FeatureBasis.constant(1), LearningRateSchedule(), 0.8, 200_000, seed=0,
        theta_star=np.array([5.0]),
    )
    assert trace.steps[-1] == 200_000
    assert len(trace.steps) == 20
    assert trace.final_distance < 1e-3
    assert np.all(np.diff(trace.distances) <= 0.0)


def test_td0_equals_linear_q_with_one_action():
    spec = make_one_state()
    policy = FiniteMemoryPolicy.uniform(1, 1)
    schedule = LearningRateSchedule()
    td = run_td0(spec, policy, FeatureBasis.constant(1), schedule, 0.8, 5000, seed=3)
    q = run_linear_q(spec, policy, FeatureBasis.constant(1, num_actions=1), schedule, 0.8, 5000, seed=3)
    assert np.array_equal(td.snapshots, q.snapshots)


def test_runs_are_deterministic(chain2, uniform_policy, quantizer4):
    schedule = LearningRateSchedule()
    a = run_td0(chain2, uniform_policy, quantizer4, schedule, 0.8, 20_000, seed=11)
    b = run_td0(chain2, uniform_policy, quantizer4, schedule, 0.8, 20_000, seed=11)
    c = run_td0(chain2, uniform_policy, quantizer4, schedule, 0.8, 20_000, seed=12)
    assert np.array_equal(a.snapshots, b.snapshots)
    assert not np.array_equal(a.snapshots, c.snapshots)


def test_invalid_schedule_is_rejected_before_running(chain2, uniform_policy, quantizer4):
    with pytest.raises(ScheduleError):
        run_td0(chain2, uniform_policy, quantizer4, LearningRateSchedule(rho=0.5), 0.8, 10, seed=0)


def test_initial_theta_length(chain2, uniform_policy, quantizer4):
    with pytest.raises(ValidationError):
        run_td0(chain2, uniform_policy, quantizer4, LearningRateSchedule(), 0.8, 10, seed=0, theta0=[0.0])


def test_linear_q_divergence_is_recorded():
    spec = make_one_state(cost=-1.0, num_actions=2)
    policy = FiniteMemoryPolicy.window_independent(1, [0.95, 0.05])
    basis = FeatureBasis(np.array([[-0.1], [-1.0]]), num_actions=2)
    schedule = LearningRateSchedule(a=1.0, t0=1.0, rho=0.55)
    trace = run_linear_q(spec, policy, basis, schedule, 0.99, 400_000, seed=0)
    assert trace.diverged
    assert trace.divergence_step is not None and trace.divergence_step < 400_000
    assert trace.divergence_norm > 1e8
    assert all(step <= trace.divergence_step for step in trace.steps)


def test_never_visited_cells_are_reported(chain2, codec):
    policy = FiniteMemoryPolicy.deterministic([0] * codec.size, 2)
    quantizer = QuantizerBasis.from_bins(np.arange(8), [0, 1])
    trace = run_tabular_q(chain2, policy, quantizer, 0.8, 2000, seed=0, burn_in=np.array([1.0, 0.0]))
    assert (0, 1) in trace.starved
    assert all(u == 1 or codec.decode(s).actions == (1,) for s, u in trace.starved)
    starved = np.array(trace.starved)
    assert np.all(trace.final.reshape(8, 2)[starved[:, 0], starved[:, 1]] == 0.0)


def test_trace_validation():
    with pytest.raises(ValidationError):
        ConvergenceTrace(steps=(2, 1), snapshots=np.zeros((2, 1)))
    with pytest.raises(ValidationError):
        ConvergenceTrace(steps=(1, 2), snapshots=np.zeros((1, 1)))


# ============== Greedy policies ==============

def test_greedy_policy_from_table():
    policy = greedy_policy(np.array([[1.0, 0.5], [0.2, 0.2]]))
    assert policy.table.tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_greedy_policy_lifts_bins_to_windows():
    quantizer = QuantizerBasis.from_bins([0, 1, 1, 0], [0, 1, 1])
    policy = greedy_policy(np.array([[0.0, 1.0], [1.0, 0.0]]), quantizer)
    # bin 1 picks action bin 1, played as action 1
    assert policy.table.argmax(axis=1).tolist() == [0, 1, 1, 0]
    assert policy.num_actions == 3
