import numpy as np
import pandas as pd
import pytest

from conftest import make_instance
from hdplan.domains import DomainSpec, generate
from hdplan.errors import DegenerateInstanceError, NonterminationError, PotentialMismatchError, ScaleGuardError
from hdplan.milp_core.model import Sense
from hdplan.nn_model import ActivationRecord, build_network, propagate_bounds
from hdplan.potentials import (
    CgIteration,
    CgTrace,
    RewardPotentials,
    compute_potentials,
    default_lambda,
    enumerate_patterns,
    oracle_enumerate,
    pattern_from_forward,
    reward_magnitude_bound,
    solve_master,
    solve_subproblem,
)
from hdplan.problem import LinearInequality, evaluate_reward


def _zeros(units, intervals):
    return RewardPotentials(np.zeros(units), np.zeros((units, intervals)), intervals, lam=1.0)


def _random_instance(seed, widths=(3, 4, 2)):
    instance, net = generate(DomainSpec('random', widths=widths, horizon=2, seed=seed))
    return instance, net, propagate_bounds(net, instance.input_box(net))


class TestRewardPotentials:

    def test_bound_selects_potentials(self):
        potentials = RewardPotentials(np.array([0.5, -1.0]), np.array([[1.0, 2.0], [3.0, 4.0]]), 2, lam=0.1)
        assert potentials.bound((0, 0)) == pytest.approx(-0.5)
        assert potentials.bound((2, 1)) == pytest.approx(5.0)
        assert potentials.bound((1, 0)) == pytest.approx(0.0)
        with pytest.raises(PotentialMismatchError):
            potentials.bound((1,))

    def test_document(self, tmp_path):
        potentials = RewardPotentials(np.array([0.0, 1.5]), np.array([[1.0], [2.0]]), 1, lam=0.25,
                                      certified_violation=0.0, master_objective=4.5, structure='2:2:1')
        document = potentials.to_dict()
        assert document['N'] == 1
        assert document['units'][1] == {'v_off': 1.5, 'v_on': [2.0]}
        path = tmp_path / 'potentials.json'
        potentials.write_json(str(path))
        loaded = RewardPotentials.load(str(path))
        np.testing.assert_array_equal(loaded.v_on, potentials.v_on)
        assert loaded.structure == '2:2:1'
        assert loaded.certified

    def test_uncertified(self):
        assert not _zeros(1, 1).certified


class TestPatternFromForward:

    def test_levels(self, relu_net, relu_bounds):
        bounds = relu_bounds
        assert bounds[0].out_hi == 1.0
        record = ActivationRecord(pre=np.array([0.75]), values=np.array([0.75]))
        assert pattern_from_forward(record, bounds, 2) == (2,)
        record = ActivationRecord(pre=np.array([0.5]), values=np.array([0.5]))
        assert pattern_from_forward(record, bounds, 2) == (1,)
        record = ActivationRecord(pre=np.array([-0.2]), values=np.array([0.0]))
        assert pattern_from_forward(record, bounds, 2) == (0,)

    def test_enumerate_skips_dead_units(self):
        net = build_network([([[1.0], [0.0]], [0.0, -1.0], 'relu'), ([[1.0, 1.0]], [0.0], 'linear')],
                            state_inputs=(0,), action_inputs=(), output_states=(0,))
        bounds = propagate_bounds(net, [(0.0, 1.0)])
        assert list(enumerate_patterns(bounds, 2)) == [(0, 0), (1, 0), (2, 0)]


class TestMaster:

    def test_two_cuts(self, relu_bounds):
        potentials = solve_master([((1,), 1.0), ((0,), 0.0)], lam=0.1, bounds=relu_bounds, intervals=1,
                                  value_bound=10.0)
        assert potentials.v_on[0, 0] == pytest.approx(1.0, abs=1e-8)
        assert potentials.v_off[0] == pytest.approx(0.0, abs=1e-8)
        assert potentials.master_objective == pytest.approx(1.1)

    def test_linear_master_hits_value_bound(self, relu_bounds):
        potentials = solve_master([((0,), -2.0)], lam=0.0, bounds=relu_bounds, intervals=1, value_bound=4.0)
        assert potentials.v_off[0] == pytest.approx(-2.0)
        assert potentials.v_on[0, 0] == pytest.approx(-4.0)

    def test_unconstrained_master(self, relu_bounds):
        potentials = solve_master([], lam=0.5, bounds=relu_bounds, intervals=2, value_bound=100.0)
        np.testing.assert_allclose(potentials.v_on, [[-1.0, -1.0]], atol=1e-8)
        assert potentials.v_off[0] == pytest.approx(-1.0)

    def test_empty_pattern_with_positive_reward(self):
        net = build_network([([[1.0]], [0.0], 'linear')], state_inputs=(0,), action_inputs=(), output_states=(0,))
        bounds = propagate_bounds(net, [(0.0, 1.0)])
        with pytest.raises(DegenerateInstanceError):
            solve_master([((), 7.0)], lam=1.0, bounds=bounds, intervals=1, value_bound=10.0)
        empty = solve_master([((), -1.0)], lam=1.0, bounds=bounds, intervals=1, value_bound=10.0)
        assert empty.num_units == 0
        assert empty.master_objective == 0.0

    def test_dead_units_only_carry_off_potentials(self):
        net = build_network([([[1.0], [0.0]], [0.0, -1.0], 'relu'), ([[1.0, 1.0]], [0.0], 'linear')],
                            state_inputs=(0,), action_inputs=(), output_states=(0,))
        bounds = propagate_bounds(net, [(0.0, 1.0)])
        potentials = solve_master([((1, 0), 1.0), ((0, 0), 0.5)], lam=0.5, bounds=bounds, intervals=1,
                                  value_bound=10.0)
        assert potentials.v_on[1, 0] == 0.0
        assert potentials.bound((1, 0)) >= 1.0 - 1e-8
        assert potentials.bound((0, 0)) >= 0.5 - 1e-8


class TestSubproblem:

    def test_zero_potentials_expose_best_reward(self, shifted_instance, shifted_net):
        bounds = propagate_bounds(shifted_net, shifted_instance.input_box(shifted_net))
        result = solve_subproblem(shifted_net, shifted_instance, bounds, _zeros(1, 1))
        assert result.violation == pytest.approx(0.2, abs=1e-7)
        assert result.r_star == pytest.approx(0.2, abs=1e-7)
        assert result.pattern == (1,)
        assert result.action[0] == pytest.approx(1.0)
        assert result.next_state[0] == pytest.approx(0.3)

    def test_reports_interval_of_the_optimum(self, relu_instance, relu_net, relu_bounds):
        result = solve_subproblem(relu_net, relu_instance, relu_bounds, _zeros(1, 2))
        assert result.pattern == (2,)
        assert result.violation == pytest.approx(1.0)

    def test_covering_potentials_leave_no_violation(self, relu_instance, relu_net, relu_bounds):
        candidate = RewardPotentials(np.array([0.0]), np.array([[1.0]]), 1, lam=1.0)
        result = solve_subproblem(relu_net, relu_instance, relu_bounds, candidate)
        assert result.violation == pytest.approx(0.0, abs=1e-9)

    def test_unit_count_checked(self, relu_instance, relu_net, relu_bounds):
        with pytest.raises(PotentialMismatchError):
            solve_subproblem(relu_net, relu_instance, relu_bounds, _zeros(3, 1))

    def test_global_constraints_restrict_transitions(self, shifted_instance, shifted_net):
        # a <= -0.5 caps the achievable reward at -0.1
        cap = LinearInequality((0.0,), (1.0,), Sense.LE, -0.5)
        instance = make_instance([(-1.0, 1.0)], [(-1.0, 1.0)], shifted_instance.reward, constraints=(cap,))
        bounds = propagate_bounds(shifted_net, instance.input_box(shifted_net))
        result = solve_subproblem(shifted_net, instance, bounds, _zeros(1, 1))
        assert result.violation == pytest.approx(-0.1, abs=1e-7)


class TestComputePotentials:

    def test_single_relu_trace(self, relu_instance, relu_net, relu_bounds):
        potentials, trace = compute_potentials(relu_net, relu_instance, relu_bounds, intervals=1, lam=0.01)
        assert [it.pattern for it in trace.iterations][:2] == [(1,), (0,)]
        first, second = trace.iterations[:2]
        assert first.violation == pytest.approx(5.0)
        assert first.r_star == pytest.approx(1.0)
        assert second.violation == pytest.approx(4.0)
        assert second.r_star == pytest.approx(0.0, abs=1e-9)
        assert len(trace.iterations) == 3
        assert trace.num_generated == 2
        assert trace.final_violation <= 1e-6
        assert potentials.v_on[0, 0] == pytest.approx(1.0, abs=1e-7)
        assert potentials.v_off[0] == pytest.approx(0.0, abs=1e-7)
        assert potentials.certified
        assert potentials.structure == relu_net.structure

    def test_guard(self, relu_instance, relu_net, relu_bounds):
        with pytest.raises(NonterminationError):
            compute_potentials(relu_net, relu_instance, relu_bounds, intervals=1, lam=0.01, max_iterations=1)

    def test_invalid_arguments(self, relu_instance, relu_net, relu_bounds):
        with pytest.raises(ValueError):
            compute_potentials(relu_net, relu_instance, relu_bounds, intervals=0)
        with pytest.raises(ValueError):
            compute_potentials(relu_net, relu_instance, relu_bounds, epsilon=0.0)

    def test_defaults_from_config(self, relu_instance, relu_net, relu_bounds):
        potentials, _ = compute_potentials(relu_net, relu_instance, relu_bounds)
        assert potentials.intervals == 2
        assert potentials.lam == pytest.approx(default_lambda(relu_bounds))

    @pytest.mark.parametrize('seed', range(3))
    @pytest.mark.parametrize('intervals', [1, 2])
    def test_matches_enumeration(self, seed, intervals):
        instance, net, bounds = _random_instance(seed)
        lam = default_lambda(bounds)
        potentials, trace = compute_potentials(net, instance, bounds, intervals=intervals, lam=lam)
        oracle = oracle_enumerate(net, instance, bounds, intervals, lam)
        assert trace.num_generated <= (intervals + 1) ** len(bounds.live_units)
        assert potentials.master_objective == pytest.approx(oracle.master_objective, abs=1e-5)
        np.testing.assert_allclose(potentials.v_off, oracle.v_off, atol=1e-4)
        np.testing.assert_allclose(potentials.v_on, oracle.v_on, atol=1e-4)

    @pytest.mark.parametrize('seed', range(3))
    def test_potentials_bound_sampled_rewards(self, seed):
        instance, net, bounds = _random_instance(seed, widths=(3, 4, 4, 2))
        potentials, _ = compute_potentials(net, instance, bounds, intervals=2)
        rng = np.random.default_rng(seed)
        box = instance.input_box(net)
        for _ in range(500):
            x = rng.uniform(box[:, 0], box[:, 1])
            output, record = net.forward(x)
            reward = evaluate_reward(instance.reward, net.next_state(output), x[list(net.action_inputs)])
            pattern = pattern_from_forward(record, bounds, 2)
            assert potentials.bound(pattern) >= reward - 1e-5

    def test_oracle_scale_guard(self):
        instance, net, bounds = _random_instance(0, widths=(3, 6, 6, 2))
        with pytest.raises(ScaleGuardError):
            oracle_enumerate(net, instance, bounds, 3, lam=1.0, max_patterns=10)

    def test_magnitude_bound(self, shifted_instance, shifted_net):
        bounds = propagate_bounds(shifted_net, shifted_instance.input_box(shifted_net))
        assert reward_magnitude_bound(shifted_instance, shifted_net, bounds) == pytest.approx(2.5)

    def test_default_lambda(self, relu_bounds):
        assert default_lambda(relu_bounds) == pytest.approx(1.0)
        net = build_network([([[4.0]], [0.0], 'relu'), ([[1.0]], [0.0], 'linear')],
                            state_inputs=(0,), action_inputs=(), output_states=(0,))
        assert default_lambda(propagate_bounds(net, [(-1.0, 1.0)])) == pytest.approx(0.5)


class TestConstraintGenerationTrace:

    @pytest.fixture(params=[(seed, intervals) for seed in range(4) for intervals in (1, 2)],
                    ids=lambda p: f'seed{p[0]}-n{p[1]}')
    def run(self, request):
        seed, intervals = request.param
        instance, net, bounds = _random_instance(seed)
        lam = default_lambda(bounds)
        _, trace = compute_potentials(net, instance, bounds, intervals=intervals, lam=lam)
        value_bound = (len(bounds) + 1) * (reward_magnitude_bound(instance, net, bounds) + 1.0)
        return trace, bounds, intervals, lam, value_bound

    def test_master_objective_nondecreasing(self, run):
        trace = run[0]
        objectives = [it.master_objective for it in trace.iterations]
        assert all(later >= earlier - 1e-7 for earlier, later in zip(objectives, objectives[1:]))

    def test_cut_patterns_are_unique(self, run):
        patterns = [pattern for pattern, _ in run[0].cuts]
        assert len(set(patterns)) == len(patterns)

    def test_each_master_keeps_earlier_cuts(self, run):
        trace, bounds, intervals, lam, value_bound = run
        cuts = trace.cuts
        for k in range(1, len(cuts) + 1):
            potentials = solve_master(cuts[:k], lam, bounds, intervals, value_bound)
            assert potentials.master_objective == pytest.approx(trace.iterations[k].master_objective, abs=1e-7)
            for pattern, r_star in cuts[:k]:
                assert potentials.bound(pattern) >= r_star - 1e-6


class TestCgTrace:

    def test_cuts_and_frame(self, tmp_path):
        trace = CgTrace(epsilon=1e-6)
        trace.append(CgIteration(1, (1,), 1.0, 5.0, -8.0, 0.01))
        trace.append(CgIteration(2, (0,), 0.0, 4.0, -3.0, 0.02))
        trace.append(CgIteration(3, (1,), 1.0, 0.0, 1.01, 0.03))
        assert trace.cuts == [((1,), 1.0), ((0,), 0.0)]
        assert trace.num_generated == 2
        assert trace.final_violation == 0.0
        frame = trace.to_frame()
        assert list(frame.columns) == ['k', 'violation', 'master_obj', 'elapsed']
        path = tmp_path / 'trace.csv'
        trace.write_csv(str(path))
        assert pd.read_csv(path)['violation'].tolist() == [5.0, 4.0, 0.0]

    def test_empty_trace(self):
        trace = CgTrace(epsilon=1e-6)
        assert trace.final_violation is None
        assert trace.to_frame().empty
