import pytest

from hdplan.config_manager import ConfigManager, get_config, get_config_manager
from hdplan.errors import ConfigurationError


class TestConfigManager:

    def test_defaults(self):
        config = get_config_manager()
        assert config.get('solver.gap_tol') == pytest.approx(1e-6)
        assert config.get('potentials.intervals') == 2
        assert config.get('potentials.lambda') is None
        assert get_config('plan.check_tol') == pytest.approx(1e-5)

    def test_singleton(self):
        assert get_config_manager() is get_config_manager()

    def test_missing_key(self):
        with pytest.raises(ConfigurationError):
            get_config('solver.nope')
        assert get_config('solver.nope', 3) == 3

    def test_yaml_file_overrides(self, tmp_path):
        path = tmp_path / 'hdplan.yaml'
        path.write_text('solver:\n  time_limit: 5\npotentials:\n  intervals: 3\n')
        config = get_config_manager(str(path))
        assert config.get('solver.time_limit') == 5
        assert config.get('potentials.intervals') == 3
        # untouched keys keep their defaults
        assert config.get('solver.int_tol') == pytest.approx(1e-6)

    def test_env_overrides_file(self, tmp_path, monkeypatch):
        path = tmp_path / 'hdplan.yaml'
        path.write_text('potentials:\n  epsilon: 1.0e-4\n')
        monkeypatch.setenv('HDPLAN_POTENTIALS__EPSILON', '0.001')
        monkeypatch.setenv('HDPLAN_LOGGING__LEVEL', 'debug')
        config = get_config_manager(str(path))
        assert config.get('potentials.epsilon') == pytest.approx(1e-3)
        assert config.get('logging.level') == 'DEBUG'

    def test_config_path_from_environment(self, tmp_path, monkeypatch):
        path = tmp_path / 'hdplan.yaml'
        path.write_text('plan:\n  check_tol: 0.001\n')
        monkeypatch.setenv('HDPLAN_CONFIG', str(path))
        assert get_config('plan.check_tol') == pytest.approx(1e-3)

    def test_invalid_value(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text('potentials:\n  intervals: 0\n')
        with pytest.raises(ConfigurationError):
            get_config_manager(str(path))

    def test_unknown_key(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text('solver:\n  pivot_rule: steepest\n')
        with pytest.raises(ConfigurationError):
            get_config_manager(str(path))

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            get_config_manager(str(tmp_path / 'missing.yaml'))

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / 'broken.yaml'
        path.write_text('solver: [unclosed\n')
        with pytest.raises(ConfigurationError):
            get_config_manager(str(path))

    def test_section_is_a_copy(self):
        config = get_config_manager()
        section = config.section('solver')
        section['gap_tol'] = 1.0
        assert config.get('solver.gap_tol') == pytest.approx(1e-6)

    def test_reset_reloads(self, tmp_path):
        path = tmp_path / 'hdplan.yaml'
        path.write_text('potentials:\n  n_jobs: 4\n')
        assert get_config('potentials.n_jobs') == 1
        ConfigManager.reset()
        assert get_config_manager(str(path)).get('potentials.n_jobs') == 4
