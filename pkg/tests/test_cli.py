import json
import logging
from dataclasses import replace
from pathlib import Path

import pandas as pd
import pytest

import hdplan.cli as cli
from hdplan.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, main
from hdplan.domains import DomainSpec, generate
from hdplan.instance_io import dump_instance, load_instance
from hdplan.problem import simulate


pytestmark = pytest.mark.usefixtures('restore_logging')


@pytest.fixture
def instance_path(tmp_path, shifted_instance, shifted_net):
    path = tmp_path / 'toy.json'
    dump_instance(shifted_instance, shifted_net, str(path))
    return str(path)


@pytest.fixture
def potentials_path(tmp_path, instance_path):
    path = tmp_path / 'toy_n1.json'
    assert main(['--log-level', 'WARNING', 'potentials', instance_path, '-N', '1', '-o', str(path)]) == EXIT_OK
    return str(path)


class TestGen:

    def test_writes_instance(self, tmp_path):
        path = tmp_path / 'gap.json'
        code = main(['gen', '--domain', 'relaxation_gap', '--size', '1', '--horizon', '2', '-o', str(path)])
        assert code == EXIT_OK
        instance, net = load_instance(str(path))
        assert instance.name == 'relaxation_gap_1_h2_s0'
        assert instance.metadata['synthetic'] is True
        assert net.widths == (2, 2, 1)

    def test_stdout(self, capsys):
        assert main(['gen', '--domain', 'random', '--widths', '3:4:2', '--horizon', '2', '--seed', '9']) == EXIT_OK
        document = json.loads(capsys.readouterr().out)
        assert document['name'] == 'random_3-4-2_h2_s9'
        assert document['network']['widths'] == [3, 4, 2]

    @pytest.mark.parametrize('argv', [
        ['gen', '--domain', 'random'],
        ['gen', '--domain', 'random', '--widths', '4:x:2'],
        ['gen', '--domain', 'navigation', '--hidden', '7'],
    ])
    def test_bad_arguments(self, argv):
        assert main(argv) == EXIT_ERROR


class TestPotentials:

    def test_document_and_trace(self, potentials_path):
        document = json.loads(Path(potentials_path).read_text())
        assert document['N'] == 1
        assert len(document['units']) == 1
        assert document['certified_violation'] <= document['epsilon']
        trace = pd.read_csv(potentials_path.replace('.json', '_trace.csv'))
        assert len(trace) >= 1

    def test_oracle(self, tmp_path, instance_path, potentials_path):
        path = tmp_path / 'oracle.json'
        assert main(['potentials', instance_path, '-N', '1', '--oracle', '-o', str(path)]) == EXIT_OK
        oracle = json.loads(path.read_text())
        generated = json.loads(Path(potentials_path).read_text())
        assert oracle['master_objective'] == pytest.approx(generated['master_objective'], abs=1e-6)
        assert not (tmp_path / 'oracle_trace.csv').exists()

    def test_missing_instance(self, tmp_path):
        assert main(['potentials', str(tmp_path / 'absent.json')]) == EXIT_ERROR


class TestPlan:

    def test_base(self, tmp_path, instance_path):
        out, stats, lp = (tmp_path / name for name in ('plan.json', 'stats.json', 'model.lp'))
        code = main(['plan', instance_path, '-o', str(out), '--stats', str(stats), '--export-lp', str(lp)])
        assert code == EXIT_OK
        plan = json.loads(out.read_text())
        assert plan['encoding'] == 'base'
        assert plan['objective'] == pytest.approx(0.2, abs=1e-7)
        assert plan['simulated_reward'] == pytest.approx(0.2, abs=1e-7)
        assert plan['check']['valid'] is True
        assert len(plan['actions']) == 1
        assert len(plan['states']) == 2
        assert json.loads(stats.read_text())['status'] == 'optimal'
        assert 'Subject To' in lp.read_text()

    def test_strengthened(self, tmp_path, instance_path, potentials_path):
        out = tmp_path / 'plan.json'
        assert main(['plan', instance_path, '--strengthen', potentials_path, '-o', str(out)]) == EXIT_OK
        plan = json.loads(out.read_text())
        assert plan['encoding'] == 'n1'
        assert plan['objective'] == pytest.approx(0.2, abs=1e-7)

    def test_potentials_for_another_network(self, tmp_path, potentials_path):
        other = tmp_path / 'other.json'
        dump_instance(*generate(DomainSpec('relaxation_gap', size=1, horizon=1)), str(other))
        assert main(['plan', str(other), '--strengthen', potentials_path]) == EXIT_ERROR

    def test_infeasible_goal(self, tmp_path):
        instance, net = generate(DomainSpec('relaxation_gap', size=1, horizon=1))
        path = tmp_path / 'unreachable.json'
        dump_instance(replace(instance, goal=((0.5, 1.0),)), net, str(path))
        assert main(['plan', str(path)]) == EXIT_INFEASIBLE

    def test_reward_mismatch_is_not_emitted(self, tmp_path, instance_path, monkeypatch):
        def shifted_simulate(*args, **kwargs):
            trajectory = simulate(*args, **kwargs)
            return replace(trajectory, rewards=trajectory.rewards + 1e-3)

        monkeypatch.setattr(cli, 'simulate', shifted_simulate)
        out = tmp_path / 'plan.json'
        assert main(['plan', instance_path, '-o', str(out)]) == EXIT_ERROR
        assert not out.exists()


class TestBench:

    def test_report_files(self, tmp_path, instance_path, capsys):
        csv_path = tmp_path / 'bench.csv'
        code = main(['bench', instance_path, '--settings', 'base,n1', '-o', str(csv_path)])
        assert code == EXIT_OK
        assert list(pd.read_csv(csv_path)['setting']) == ['base', 'n1']
        assert json.loads((tmp_path / 'bench.json').read_text())['best'] in ('base', 'n1')
        assert (tmp_path / 'bench_timelines.csv').exists()
        assert 'Best setting:' in capsys.readouterr().out

    def test_unknown_setting(self, tmp_path, instance_path):
        assert main(['bench', instance_path, '--settings', 'base,n0', '-o', str(tmp_path / 'b.csv')]) == EXIT_ERROR


class TestConfig:

    def test_unreadable_config(self, tmp_path):
        assert main(['--config', str(tmp_path / 'absent.yaml'), 'gen', '--domain', 'hvac']) == EXIT_ERROR

    def test_config_file_sets_log_level(self, tmp_path):
        config = tmp_path / 'hdplan.yaml'
        config.write_text('logging:\n  level: ERROR\n')
        out = tmp_path / 'hvac.json'
        assert main(['--config', str(config), 'gen', '--domain', 'hvac', '--horizon', '2', '-o', str(out)]) == EXIT_OK
        assert logging.getLogger('hdplan').level == logging.ERROR
