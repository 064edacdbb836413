import numpy as np
import pytest

from conftest import make_instance
from hdplan.compiler import check_potentials, compile_base, compile_strengthened, root_relaxation
from hdplan.domains import DomainSpec, generate
from hdplan.encoding import VarKind
from hdplan.errors import PotentialMismatchError
from hdplan.milp_core import MilpParams, Sense, SolveStatus, solve_milp
from hdplan.nn_model import build_network, propagate_bounds
from hdplan.potentials import RewardPotentials, compute_potentials, pattern_from_forward
from hdplan.problem import Plan, RewardSpec, check_plan, simulate


def _zero_potentials(net, intervals):
    return RewardPotentials(np.zeros(net.num_hidden), np.zeros((net.num_hidden, intervals)), intervals, lam=1.0)


def _assignment(compiled, trajectory, plan):
    """Solution vector of ``compiled`` that reproduces a simulated trajectory."""
    instance, bounds = compiled.instance, compiled.bounds
    x = np.zeros(compiled.model.num_variables)
    for key, var_id in compiled.var_index.items():
        t = key.t
        if key.kind is VarKind.ACTION:
            x[var_id] = plan.actions[t - 1, key.entity]
        elif key.kind is VarKind.STATE:
            x[var_id] = trajectory.states[t - 1, key.entity]
        elif key.kind is VarKind.RELU:
            x[var_id] = trajectory.patterns[t - 1].values[key.entity]
        elif key.kind is VarKind.BIT:
            x[var_id] = float(trajectory.patterns[t - 1].bits[key.entity])
        elif key.kind is VarKind.INTERVAL:
            level = pattern_from_forward(trajectory.patterns[t - 1], bounds, compiled.intervals)[key.entity]
            x[var_id] = 1.0 if level == key.interval else 0.0
        elif key.kind is VarKind.ABS:
            term = instance.reward.abs_terms[key.entity]
            x[var_id] = abs(term.inner(trajectory.states[t], plan.actions[t - 1]))
    return x


def _random_instance(seed, horizon=2, widths=(3, 4, 2)):
    return generate(DomainSpec('random', widths=widths, horizon=horizon, seed=seed))


class TestCompileBase:

    def test_binary_count(self, shifted_instance, shifted_net):
        bounds = propagate_bounds(shifted_net, shifted_instance.input_box(shifted_net))
        compiled = compile_base(shifted_instance, shifted_net, bounds)
        assert compiled.num_binaries == 1
        assert compiled.model.name == 'toy_base'

    def test_binary_count_scales_with_horizon(self):
        instance, net = _random_instance(0, horizon=3, widths=(3, 5, 5, 2))
        bounds = propagate_bounds(net, instance.input_box(net))
        assert compile_base(instance, net, bounds).num_binaries == 3 * 10

    def test_single_relu_optimum(self, relu_instance, relu_net, relu_bounds):
        compiled = compile_base(relu_instance, relu_net, relu_bounds)
        x, stats = solve_milp(compiled.model)
        assert stats.status is SolveStatus.OPTIMAL
        assert stats.primal == pytest.approx(1.0)
        plan = compiled.extract_plan(x)
        assert plan.states[0, 0] == pytest.approx(1.0)
        assert plan.objective == pytest.approx(1.0)

    def test_absolute_reward_optimum_matches_grid(self, shifted_instance, shifted_net):
        bounds = propagate_bounds(shifted_net, shifted_instance.input_box(shifted_net))
        compiled = compile_base(shifted_instance, shifted_net, bounds)
        x, stats = solve_milp(compiled.model)
        assert stats.primal == pytest.approx(0.2, abs=1e-7)

        grid = np.linspace(-1.0, 1.0, 201)
        s, a = np.meshgrid(grid, grid)
        values = -np.abs(np.maximum(s + a, 0.0) - 0.3) + 0.2 * a
        assert values.max() == pytest.approx(0.2, abs=1e-9)
        assert stats.primal >= values.max() - 1e-7

        plan = compiled.extract_plan(x)
        assert plan.actions[0, 0] == pytest.approx(1.0)
        assert plan.states[0, 0] == pytest.approx(-0.7)

    def test_rows_and_names(self, relu_instance, relu_net, relu_bounds):
        model = compile_base(relu_instance, relu_net, relu_bounds).model
        names = {con.name for con in model.constraints}
        assert {'relu_ub_on_u0_t1', 'relu_ub_in_u0_t1', 'relu_lb_u0_t1', 'out_s0_t1'} <= names
        # the initial interval and the goal equal the domain, so neither writes a row
        assert not any(name.startswith(('init', 'goal')) for name in names)
        p = model.variable_id('P_u0_t1')
        pb = model.variable_id('Pb_u0_t1')
        assert model.variables[p].hi == pytest.approx(1.0)
        assert model.constraint('relu_ub_on_u0_t1').coeffs == {p: 1.0, pb: -1.0}

    def test_fixed_initial_and_goal_rows(self, shifted_net):
        reward = RewardSpec(state_coeffs=(1.0,), action_coeffs=(0.0,))
        instance = make_instance([(-1.0, 1.0)], [(-1.0, 1.0)], reward, initial=[0.25], goal=[(-1.0, 0.5)])
        bounds = propagate_bounds(shifted_net, instance.input_box(shifted_net))
        model = compile_base(instance, shifted_net, bounds).model
        init = model.constraint('init_s0')
        assert init.sense is Sense.EQ and init.rhs == 0.25
        goal = model.constraint('goal_hi_s0')
        assert goal.sense is Sense.LE and goal.rhs == 0.5
        x, stats = solve_milp(model)
        assert stats.primal == pytest.approx(0.5)

    def test_global_constraint_rows(self, shifted_instance, shifted_net, budget_constraint):
        instance = make_instance([(-1.0, 1.0)], [(-1.0, 1.0)], shifted_instance.reward,
                                 constraints=(budget_constraint,))
        bounds = propagate_bounds(shifted_net, instance.input_box(shifted_net))
        compiled = compile_base(instance, shifted_net, bounds)
        row = compiled.model.constraint('glob_0_t1')
        assert row.sense is Sense.LE and row.rhs == 0.5
        x, stats = solve_milp(compiled.model)
        # s + a <= 0.5 still reaches y' = 0.3; a = 1 forces s <= -0.5
        assert stats.primal == pytest.approx(0.2, abs=1e-7)

    @pytest.mark.parametrize('seed', range(3))
    def test_simulated_trajectories_are_feasible(self, seed):
        instance, net = _random_instance(seed, horizon=3)
        bounds = propagate_bounds(net, instance.input_box(net))
        compiled = compile_base(instance, net, bounds)
        rng = np.random.default_rng(seed)
        for _ in range(5):
            plan = Plan(rng.uniform(-1.0, 1.0, (3, 1)))
            trajectory = simulate(instance, net, plan)
            x = _assignment(compiled, trajectory, plan)
            assert compiled.model.max_violation(x) <= 1e-9
            assert compiled.model.objective_value(x) == pytest.approx(trajectory.total_reward, abs=1e-9)

    @pytest.mark.parametrize('seed', range(3))
    def test_optimal_plan_passes_check(self, seed):
        instance, net = _random_instance(seed)
        bounds = propagate_bounds(net, instance.input_box(net))
        compiled = compile_base(instance, net, bounds)
        x, stats = solve_milp(compiled.model, MilpParams(gap_tol=1e-9))
        plan = compiled.extract_plan(x)
        report = check_plan(instance, net, plan, tol=1e-6)
        assert report.valid
        assert report.total_reward == pytest.approx(stats.primal, abs=1e-6)


class TestCompileStrengthened:

    @pytest.fixture
    def steep(self):
        """y' = relu(3 s) with s in [0, 1], so N_u = 3."""
        net = build_network([([[3.0, 0.0]], [0.0], 'relu'), ([[1.0]], [0.0], 'linear')],
                            state_inputs=(0,), action_inputs=(1,), output_states=(0,))
        reward = RewardSpec(state_coeffs=(1.0,), action_coeffs=(0.0,))
        instance = make_instance([(0.0, 3.0)], [(-1.0, 1.0)], reward, initial=[(0.0, 1.0)])
        return instance, net, propagate_bounds(net, instance.input_box(net))

    def test_interval_rows(self, steep):
        instance, net, bounds = steep
        compiled = compile_strengthened(instance, net, bounds, _zero_potentials(net, 3))
        model = compiled.model
        assert bounds[0].out_hi == pytest.approx(9.0)
        p = model.variable_id('P_u0_t1')
        pi2 = model.variable_id('Pi_2_u0_t1')
        lo2 = model.constraint('interval_lo_2_u0_t1')
        assert lo2.sense is Sense.GE and lo2.rhs == 0.0
        assert lo2.coeffs == {p: 1.0, pi2: pytest.approx(-3.0)}
        hi2 = model.constraint('interval_hi_2_u0_t1')
        assert hi2.sense is Sense.LE and hi2.rhs == pytest.approx(9.0)
        assert hi2.coeffs == {p: 1.0, pi2: pytest.approx(3.0)}
        names = {con.name for con in model.constraints}
        assert 'interval_lo_1_u0_t1' not in names
        assert 'interval_hi_3_u0_t1' not in names
        assert {'interval_link_u0_t1', 'potential_bound_t1'} <= names
        assert compiled.num_binaries == 4
        assert model.name == 'toy_n3'

    def test_interval_rows_tight_domain(self):
        net = build_network([([[3.0, 0.0]], [0.0], 'relu'), ([[1.0]], [0.0], 'linear')],
                            state_inputs=(0,), action_inputs=(1,), output_states=(0,))
        reward = RewardSpec(state_coeffs=(1.0,), action_coeffs=(0.0,))
        instance = make_instance([(0.0, 1.0)], [(-1.0, 1.0)], reward)
        bounds = propagate_bounds(net, instance.input_box(net))
        model = compile_strengthened(instance, net, bounds, _zero_potentials(net, 3)).model
        p = model.variable_id('P_u0_t1')
        pi2 = model.variable_id('Pi_2_u0_t1')
        assert model.constraint('interval_lo_2_u0_t1').coeffs == {p: 1.0, pi2: pytest.approx(-1.0)}
        hi2 = model.constraint('interval_hi_2_u0_t1')
        assert hi2.coeffs == {p: 1.0, pi2: pytest.approx(1.0)}
        assert hi2.rhs == pytest.approx(3.0)

    def test_potential_cap_limits_objective(self, steep):
        instance, net, bounds = steep
        # a cap of 2 on the step reward for every pattern
        potentials = RewardPotentials(np.array([2.0]), np.full((1, 1), 2.0), 1, lam=1.0)
        x, stats = solve_milp(compile_strengthened(instance, net, bounds, potentials).model)
        assert stats.primal == pytest.approx(2.0)

    def test_dead_unit_bits_fixed_off(self):
        net = build_network([([[1.0, 0.0], [0.0, 0.0]], [0.0, -1.0], 'relu'), ([[1.0, 1.0]], [0.0], 'linear')],
                            state_inputs=(0,), action_inputs=(1,), output_states=(0,))
        reward = RewardSpec(state_coeffs=(1.0,), action_coeffs=(0.0,))
        instance = make_instance([(0.0, 1.0)], [(-1.0, 1.0)], reward)
        bounds = propagate_bounds(net, instance.input_box(net))
        assert bounds.live_units == [0]
        model = compile_strengthened(instance, net, bounds, _zero_potentials(net, 2)).model
        assert model.variables[model.variable_id('Pb_u1_t1')].hi == 0.0
        assert not model.has_variable('Pi_1_u1_t1')
        assert model.has_variable('Pi_1_u0_t1')

    def test_potential_mismatch(self, steep):
        instance, net, bounds = steep
        wrong = RewardPotentials(np.zeros(2), np.zeros((2, 1)), 1, lam=1.0)
        with pytest.raises(PotentialMismatchError):
            compile_strengthened(instance, net, bounds, wrong)
        other = RewardPotentials(np.zeros(1), np.zeros((1, 1)), 1, lam=1.0, structure='2:5:1')
        with pytest.raises(PotentialMismatchError):
            check_potentials(other, net)

    @pytest.mark.parametrize('seed', range(2))
    def test_simulated_trajectories_are_feasible(self, seed):
        instance, net = _random_instance(seed, horizon=3)
        bounds = propagate_bounds(net, instance.input_box(net))
        potentials, _ = compute_potentials(net, instance, bounds, intervals=2)
        compiled = compile_strengthened(instance, net, bounds, potentials)
        rng = np.random.default_rng(10 + seed)
        for _ in range(5):
            plan = Plan(rng.uniform(-1.0, 1.0, (3, 1)))
            trajectory = simulate(instance, net, plan)
            x = _assignment(compiled, trajectory, plan)
            assert compiled.model.max_violation(x) <= 1e-5


class TestRelaxation:

    @pytest.mark.parametrize('pairs,horizon', [(1, 2), (2, 3)])
    def test_relaxation_gap_closes(self, pairs, horizon):
        instance, net = generate(DomainSpec('relaxation_gap', size=pairs, horizon=horizon))
        bounds = propagate_bounds(net, instance.input_box(net))
        base = compile_base(instance, net, bounds)
        assert root_relaxation(base) == pytest.approx(0.5 * pairs * horizon, abs=1e-7)
        potentials, _ = compute_potentials(net, instance, bounds, intervals=1)
        strengthened = compile_strengthened(instance, net, bounds, potentials)
        assert root_relaxation(strengthened) == pytest.approx(0.0, abs=1e-5)
        _, stats = solve_milp(strengthened.model)
        assert stats.primal == pytest.approx(0.0, abs=1e-7)

    @pytest.mark.parametrize('seed', range(3))
    def test_strengthening_never_loosens_and_keeps_optimum(self, seed):
        instance, net = _random_instance(seed)
        bounds = propagate_bounds(net, instance.input_box(net))
        base = compile_base(instance, net, bounds)
        _, base_stats = solve_milp(base.model, MilpParams(gap_tol=1e-9))
        base_root = root_relaxation(base)
        assert base_root >= base_stats.primal - 1e-7

        for intervals in (1, 2):
            potentials, _ = compute_potentials(net, instance, bounds, intervals=intervals)
            strengthened = compile_strengthened(instance, net, bounds, potentials)
            root = root_relaxation(strengthened)
            assert root <= base_root + 1e-6
            assert root >= base_stats.primal - 1e-6
            _, stats = solve_milp(strengthened.model, MilpParams(gap_tol=1e-9))
            assert stats.primal == pytest.approx(base_stats.primal, abs=1e-5)
