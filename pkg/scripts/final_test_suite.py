#!/usr/bin/env python3
"""
Acceptance harness for HD-Plan.

Runs the acceptance checks at full scale (oracle equivalence, potential
validity, termination, relaxation tightening, node counts, optimum
preservation, MILP core correctness, plan validity, trace shape and bench
report format) and writes ``test_results/test_results.json`` plus a log.

Oracle networks draw |U| from 2 to 8 for N = 1 only. N = 2 stops at |U| = 5
and N = 3 at |U| = 4, where exhaustive enumeration stays near 256 patterns.
One extra |U| = 8, N = 2 network (6561 patterns) covers the full width.
"""

import os
import sys
import json
import time
import argparse
import itertools
import logging
from datetime import datetime
from typing import Any, Callable, Dict, List, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linprog
from tqdm import tqdm

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from hdplan.bench import BENCH_COLUMNS, BenchRow, run_bench  # noqa: E402
from hdplan.cli import EXIT_OK, main as cli_main  # noqa: E402
from hdplan.compiler import compile_base, compile_strengthened, root_relaxation  # noqa: E402
from hdplan.domains import DomainSpec, generate  # noqa: E402
from hdplan.instance_io import dump_instance  # noqa: E402
from hdplan.logging_utils import setup_logging  # noqa: E402
from hdplan.milp_core import Model, MilpParams, ObjectiveSense, Sense, SolveStatus, solve_milp  # noqa: E402
from hdplan.nn_model import propagate_bounds  # noqa: E402
from hdplan.potentials import compute_potentials, default_lambda, oracle_enumerate, pattern_from_forward  # noqa: E402
from hdplan.problem import evaluate_reward  # noqa: E402

# (N, largest |U|) keeping (N+1)^|U| at or below 256 oracle patterns
ORACLE_SIZES = {1: 8, 2: 5, 3: 4}
FULL_WIDTH_CASE = (2, 8)


class FinalTestSuite:
    """
    Full-scale acceptance run. Every check records PASSED/FAILED with its
    details under ``test_results``; one failing check fails the suite.
    """

    def __init__(self, output_dir: str = 'test_results', num_nets: int = 50, num_samples: int = 1000,
                 num_milps: int = 100, seed: int = 0):
        os.makedirs(output_dir, exist_ok=True)
        self.output_dir = output_dir
        self.results_file = os.path.join(output_dir, 'test_results.json')
        self.num_nets = num_nets
        self.num_samples = num_samples
        self.num_milps = num_milps
        self.seed = seed

        setup_logging('INFO', log_file=os.path.join(output_dir, 'final_test_suite.log'))
        self.logger = logging.getLogger('hdplan.final_test_suite')

        self.test_results: Dict[str, Any] = {'started': datetime.now().isoformat(), 'checks': {},
                                             'overall_status': 'PENDING'}
        self._cg_runs: List[Dict[str, Any]] = []

    # -- shared fixtures ---------------------------------------------------

    def _random_cases(self) -> List[Tuple[int, int, int]]:
        """(seed, N, |U|) for every random network of the oracle checks."""
        rng = np.random.default_rng(self.seed)
        cases = []
        for k in range(self.num_nets):
            intervals = int(rng.integers(1, 4))
            units = int(rng.integers(2, ORACLE_SIZES[intervals] + 1))
            cases.append((self.seed + k, intervals, units))
        cases.append((self.seed + self.num_nets, *FULL_WIDTH_CASE))
        return cases

    def _run_potentials(self):
        """Constraint generation and the oracle on every random network; cached for later checks."""
        if self._cg_runs:
            return self._cg_runs
        for seed, intervals, units in tqdm(self._random_cases(), desc='potentials', leave=False):
            instance, net = generate(DomainSpec('random', widths=(3, units, 2), horizon=2, seed=seed))
            bounds = propagate_bounds(net, instance.input_box(net))
            lam = default_lambda(bounds)
            start = time.perf_counter()
            potentials, trace = compute_potentials(net, instance, bounds, intervals=intervals, lam=lam, epsilon=1e-6)
            cg_time = time.perf_counter() - start
            oracle = oracle_enumerate(net, instance, bounds, intervals, lam, epsilon=1e-6)
            self._cg_runs.append({'seed': seed, 'N': intervals, 'units': units, 'live': len(bounds.live_units),
                                  'instance': instance, 'net': net, 'bounds': bounds, 'potentials': potentials,
                                  'trace': trace, 'oracle': oracle, 'cg_time': cg_time})
        return self._cg_runs

    def _record(self, name: str, passed: bool, **details):
        self.test_results['checks'][name] = {'status': 'PASSED' if passed else 'FAILED', **details}
        self.logger.info(f"{name}: {'PASSED' if passed else 'FAILED'}")

    # -- checks ------------------------------------------------------------

    def check_oracle_equivalence(self) -> bool:
        runs = self._run_potentials()
        mismatches = []
        for run in runs:
            cg, oracle = run['potentials'], run['oracle']
            gap = abs(cg.master_objective - oracle.master_objective)
            if gap > 1e-5 or not cg.certified or oracle.certified_violation > 1e-6:
                mismatches.append({'seed': run['seed'], 'N': run['N'], 'gap': gap,
                                   'cg_violation': cg.certified_violation})
        total = sum(run['cg_time'] for run in runs)
        self._record('oracle_equivalence', not mismatches, nets=len(runs), mismatches=mismatches,
                     cg_seconds=total)
        return not mismatches

    def check_upper_bound_validity(self) -> bool:
        violations = 0
        worst = 0.0
        for run in self._run_potentials():
            instance, net, bounds, potentials = run['instance'], run['net'], run['bounds'], run['potentials']
            rng = np.random.default_rng(run['seed'])
            state_box, action_box = instance.state_box(), instance.action_box()
            accepted = 0
            while accepted < self.num_samples:
                state = rng.uniform(state_box[:, 0], state_box[:, 1])
                action = rng.uniform(action_box[:, 0], action_box[:, 1])
                if any(c.violation(state, action) > 0.0 for c in instance.constraints):
                    continue
                accepted += 1
                next_state, record = net.step(state, action)
                reward = evaluate_reward(instance.reward, next_state, action)
                slack = potentials.bound(pattern_from_forward(record, bounds, potentials.intervals)) - reward
                worst = min(worst, slack)
                if slack < -1e-6:
                    violations += 1
        self._record('upper_bound_validity', violations == 0, samples_per_net=self.num_samples,
                     violations=violations, worst_slack=worst)
        return violations == 0

    def check_termination(self) -> bool:
        failures = []
        for run in self._run_potentials():
            trace = run['trace']
            patterns = [pattern for pattern, _ in trace.cuts]
            limit = (run['N'] + 1) ** run['units']
            if trace.num_generated > limit or len(set(patterns)) != len(patterns):
                failures.append({'seed': run['seed'], 'generated': trace.num_generated, 'limit': limit})
        self._record('termination_bound', not failures, failures=failures)
        return not failures

    def check_relaxation_tightening(self) -> bool:
        looser = []
        for run in self._run_potentials():
            instance, net, bounds = run['instance'], run['net'], run['bounds']
            base = root_relaxation(compile_base(instance, net, bounds))
            strong = root_relaxation(compile_strengthened(instance, net, bounds, run['potentials']))
            if strong > base + 1e-8:
                looser.append({'seed': run['seed'], 'base': base, 'strengthened': strong})

        instance, net = generate(DomainSpec('relaxation_gap', size=2, horizon=5))
        bounds = propagate_bounds(net, instance.input_box(net))
        potentials, _ = compute_potentials(net, instance, bounds, intervals=2)
        base = root_relaxation(compile_base(instance, net, bounds))
        strong = root_relaxation(compile_strengthened(instance, net, bounds, potentials))
        passed = not looser and base - strong >= 0.1
        self._record('relaxation_tightening', passed, looser=looser,
                     crafted={'instance': instance.name, 'base': base, 'strengthened': strong})
        return passed

    def check_node_counts(self) -> bool:
        params = MilpParams(time_limit=120.0, node_limit=5000)
        rows = []
        passed = True
        for pairs, horizon in [(2, 5), (3, 5), (4, 6)]:
            instance, net = generate(DomainSpec('relaxation_gap', size=pairs, horizon=horizon))
            bounds = propagate_bounds(net, instance.input_box(net))
            potentials, _ = compute_potentials(net, instance, bounds, intervals=2)
            _, base = solve_milp(compile_base(instance, net, bounds).model, params)
            _, strong = solve_milp(compile_strengthened(instance, net, bounds, potentials).model, params)
            ratio = strong.nodes_closed / base.nodes_closed
            rows.append({'instance': instance.name, 'base_closed': base.nodes_closed, 'base_status': base.status.value,
                         'n2_closed': strong.nodes_closed, 'n2_status': strong.status.value, 'ratio': ratio})
            passed &= base.nodes_closed > 1 and strong.nodes_closed <= base.nodes_closed
        pd.DataFrame(rows).to_csv(os.path.join(self.output_dir, 'node_counts.csv'), index=False)
        self._record('node_count_direction', passed, instances=rows)
        return passed

    def check_optimum_preservation(self) -> bool:
        params = MilpParams(time_limit=60.0)
        compared, mismatches = 0, []
        for run in self._run_potentials()[:20]:
            instance, net, bounds = run['instance'], run['net'], run['bounds']
            _, base = solve_milp(compile_base(instance, net, bounds).model, params)
            _, strong = solve_milp(compile_strengthened(instance, net, bounds, run['potentials']).model, params)
            if base.status is SolveStatus.OPTIMAL and strong.status is SolveStatus.OPTIMAL:
                compared += 1
                if abs(base.primal - strong.primal) > 1e-5:
                    mismatches.append({'seed': run['seed'], 'base': base.primal, 'strengthened': strong.primal})
        passed = compared > 0 and not mismatches
        self._record('optimum_preservation', passed, compared=compared, mismatches=mismatches)
        return passed

    @staticmethod
    def _random_milp(rng: np.random.Generator) -> Tuple[Model, List[int]]:
        model = Model('random_milp')
        bins = [model.add_binary(f'b{j}') for j in range(int(rng.integers(1, 7)))]
        conts = [model.add_variable(f'x{j}', 0.0, float(rng.uniform(1, 4))) for j in range(3)]
        ids = bins + conts
        for i in range(4):
            model.add_constraint({j: float(rng.normal()) for j in ids}, Sense.LE, float(rng.uniform(0.5, 3.0)), f'c{i}')
        model.set_objective({j: float(rng.normal()) for j in ids}, ObjectiveSense.MAXIMIZE)
        return model, bins

    @staticmethod
    def _enumerate(model: Model, bins: List[int]):
        A, _, b = model.constraint_matrix()
        c = -model.objective_vector()
        best = None
        for assignment in itertools.product((0.0, 1.0), repeat=len(bins)):
            bounds = [(v.lo, v.hi) for v in model.variables]
            for j, value in zip(bins, assignment):
                bounds[j] = (value, value)
            result = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method='highs')
            if result.status == 0:
                best = -float(result.fun) if best is None else max(best, -float(result.fun))
        return best

    def check_milp_core(self) -> bool:
        rng = np.random.default_rng(self.seed + 1000)
        failures = []
        for k in tqdm(range(self.num_milps), desc='milp core', leave=False):
            model, bins = self._random_milp(rng)
            expected = self._enumerate(model, bins)
            x, stats = solve_milp(model, MilpParams(gap_tol=1e-9))
            if expected is None:
                ok = stats.status is SolveStatus.INFEASIBLE
            else:
                ok = (stats.status is SolveStatus.OPTIMAL and abs(stats.primal - expected) <= 1e-6
                      and model.max_violation(x) <= 1e-7)
            if not ok:
                failures.append({'model': k, 'expected': expected, 'primal': stats.primal,
                                 'status': stats.status.value})
        self._record('milp_core', not failures, models=self.num_milps, failures=failures)
        return not failures

    def check_plan_validity(self) -> bool:
        specs = [DomainSpec('relaxation_gap', size=2, horizon=3), DomainSpec('navigation', horizon=4),
                 DomainSpec('reservoir', size=2, horizon=3), DomainSpec('hvac', size=2, horizon=3),
                 DomainSpec('random', widths=(4, 5, 2), horizon=3, seed=7)]
        plan_dir = os.path.join(self.output_dir, 'plans')
        os.makedirs(plan_dir, exist_ok=True)
        results = []
        for spec in tqdm(specs, desc='plans', leave=False):
            instance_path = os.path.join(plan_dir, f'{spec.name}.json')
            dump_instance(*generate(spec), instance_path)
            plan_path = os.path.join(plan_dir, f'{spec.name}_plan.json')
            code = cli_main(['--log-level', 'WARNING', '--log-file', os.path.join(self.output_dir, 'final_test_suite.log'),
                             'plan', instance_path, '--time-limit', '120', '-o', plan_path])
            entry = {'instance': spec.name, 'exit_code': code}
            if code == EXIT_OK:
                with open(plan_path) as f:
                    plan = json.load(f)
                entry.update(valid=plan['check']['valid'], max_violation=plan['check']['max_violation'],
                             reward_gap=abs(plan['simulated_reward'] - plan['objective']))
            results.append(entry)
        setup_logging('INFO', log_file=os.path.join(self.output_dir, 'final_test_suite.log'))
        emitted = [r for r in results if r['exit_code'] == EXIT_OK]
        passed = bool(emitted) and all(r['valid'] and r['reward_gap'] <= 1e-5 for r in emitted)
        self._record('plan_validity', passed, plans=results)
        return passed

    def check_trace_shape(self) -> bool:
        trace_dir = os.path.join(self.output_dir, 'traces')
        os.makedirs(trace_dir, exist_ok=True)
        failures = []
        for run in self._run_potentials():
            trace = run['trace']
            path = os.path.join(trace_dir, f"random_s{run['seed']}_n{run['N']}_trace.csv")
            trace.write_csv(path)
            frame = pd.read_csv(path)
            master = frame['master_obj'].to_numpy()
            ok = (len(frame) > 0 and frame['violation'].iloc[-1] <= trace.epsilon
                  and bool(np.all(np.diff(master) >= -1e-9 * np.maximum(1.0, np.abs(master[:-1])))))
            if not ok:
                failures.append(run['seed'])
        self._record('trace_shape', not failures, traces=len(self._run_potentials()), failures=failures)
        return not failures

    def check_report_fidelity(self) -> bool:
        instance, net = generate(DomainSpec('relaxation_gap', size=2, horizon=3))
        report = run_bench(instance, net, ['base', 'n1', 'n2'], MilpParams(time_limit=60.0, node_limit=2000))
        csv_path = os.path.join(self.output_dir, 'bench.csv')
        report.write(csv_path, os.path.join(self.output_dir, 'bench.json'),
                     os.path.join(self.output_dir, 'bench_timelines.csv'))
        frame = pd.read_csv(csv_path)
        usable = [row for row in report.rows if row.usable]
        expected = min(usable, key=BenchRow.sort_key).setting if usable else None
        passed = list(frame.columns) == BENCH_COLUMNS and report.best is not None and report.best.setting == expected
        self._record('report_fidelity', passed, best=report.best.setting if report.best else None,
                     columns=list(frame.columns))
        return passed

    # -- driver ------------------------------------------------------------

    def run_final_test_suite(self) -> bool:
        checks: List[Tuple[str, Callable[[], bool]]] = [
            ('oracle_equivalence', self.check_oracle_equivalence),
            ('upper_bound_validity', self.check_upper_bound_validity),
            ('termination_bound', self.check_termination),
            ('relaxation_tightening', self.check_relaxation_tightening),
            ('node_count_direction', self.check_node_counts),
            ('optimum_preservation', self.check_optimum_preservation),
            ('milp_core', self.check_milp_core),
            ('plan_validity', self.check_plan_validity),
            ('trace_shape', self.check_trace_shape),
            ('report_fidelity', self.check_report_fidelity),
        ]
        outcomes = {}
        for name, check in checks:
            self.logger.info(f"Running {name}")
            start = time.perf_counter()
            try:
                outcomes[name] = check()
            except Exception as e:
                self.logger.error(f"{name} raised: {e}")
                self._record(name, False, error=str(e))
                outcomes[name] = False
            self.test_results['checks'][name]['seconds'] = time.perf_counter() - start

        passed = all(outcomes.values())
        self.test_results['overall_status'] = 'PASSED' if passed else 'FAILED'
        self.test_results['finished'] = datetime.now().isoformat()
        with open(self.results_file, 'w') as f:
            json.dump(self.test_results, f, indent=2, default=str)
        self.logger.info(f"Acceptance run {'PASSED' if passed else 'FAILED'}; results in {self.results_file}")
        return passed


def main():
    parser = argparse.ArgumentParser(description='HD-Plan acceptance checks')
    parser.add_argument('--output-dir', default='test_results')
    parser.add_argument('--nets', type=int, default=50, help='Random networks for the potential checks')
    parser.add_argument('--samples', type=int, default=1000, help='Transitions sampled per network')
    parser.add_argument('--milps', type=int, default=100, help='Random models for the MILP core check')
    parser.add_argument('--seed', type=int, default=0)
    args = parser.parse_args()

    suite = FinalTestSuite(args.output_dir, args.nets, args.samples, args.milps, args.seed)
    sys.exit(0 if suite.run_final_test_suite() else 1)


if __name__ == "__main__":
    main()
