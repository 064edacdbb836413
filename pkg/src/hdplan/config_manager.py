import os
import copy
import logging
from typing import Any, Dict, Optional
from functools import lru_cache

import yaml
import jsonschema
from dotenv import load_dotenv

from .errors import ConfigurationError

ENV_PREFIX = 'HDPLAN_'
CONFIG_PATH_ENV = 'HDPLAN_CONFIG'

_MISSING = object()

DEFAULT_CONFIG: Dict[str, Any] = {
    'solver': {
        'feas_tol': 1e-7,
        'int_tol': 1e-6,
        'gap_tol': 1e-6,
        'bland_after': 1000,
        'refactor_every': 50,
        'time_limit': 60.0,
        'node_limit': None,
    },
    'potentials': {
        'intervals': 2,
        'epsilon': 1e-6,
        'lambda': None,
        'max_iterations': None,
        'subproblem_gap_tol': 1e-9,
        'oracle_max_patterns': 100000,
        'n_jobs': 1,
    },
    'plan': {
        'check_tol': 1e-5,
    },
    'logging': {
        'level': 'INFO',
        'json': False,
        'file': None,
    },
}

_NUMBER_OR_NULL = {'type': ['number', 'null']}

CONFIG_SCHEMA = {
    'type': 'object',
    'properties': {
        'solver': {
            'type': 'object',
            'properties': {
                'feas_tol': {'type': 'number', 'exclusiveMinimum': 0},
                'int_tol': {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 0.5},
                'gap_tol': {'type': 'number', 'minimum': 0},
                'bland_after': {'type': 'integer', 'minimum': 0},
                'refactor_every': {'type': 'integer', 'minimum': 1},
                'time_limit': _NUMBER_OR_NULL,
                'node_limit': {'type': ['integer', 'null'], 'minimum': 1},
            },
            'additionalProperties': False,
        },
        'potentials': {
            'type': 'object',
            'properties': {
                'intervals': {'type': 'integer', 'minimum': 1},
                'epsilon': {'type': 'number', 'exclusiveMinimum': 0},
                'lambda': {'type': ['number', 'null'], 'minimum': 0},
                'max_iterations': {'type': ['integer', 'null'], 'minimum': 1},
                'subproblem_gap_tol': {'type': 'number', 'minimum': 0},
                'oracle_max_patterns': {'type': 'integer', 'minimum': 1},
                'n_jobs': {'type': 'integer'},
            },
            'additionalProperties': False,
        },
        'plan': {
            'type': 'object',
            'properties': {
                'check_tol': {'type': 'number', 'exclusiveMinimum': 0},
            },
            'additionalProperties': False,
        },
        'logging': {
            'type': 'object',
            'properties': {
                'level': {'enum': ['DEBUG', 'INFO', 'WARNING', 'ERROR']},
                'json': {'type': 'boolean'},
                'file': {'type': ['string', 'null']},
            },
            'additionalProperties': False,
        },
    },
    'additionalProperties': False,
}


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class ConfigManager:
    """
    Layered configuration for solver, potentials, plan and logging settings.

    Sources, lowest priority first:
    1. Built-in defaults
    2. YAML config file (explicit path, else ``HDPLAN_CONFIG``)
    3. Environment variables ``HDPLAN_<SECTION>__<KEY>`` (a ``.env`` file is honoured)
    """
    _instance = None

    def __new__(cls, config_path: Optional[str] = None):
        if not cls._instance:
            instance = super().__new__(cls)
            instance._configs = {}
            instance._config_path = config_path
            instance._load_configurations()
            cls._instance = instance
        elif config_path is not None and config_path != cls._instance._config_path:
            cls._instance._config_path = config_path
            cls._instance.reload()
        return cls._instance

    def _load_configurations(self):
        load_dotenv()
        config = copy.deepcopy(DEFAULT_CONFIG)

        path = self._config_path or os.getenv(CONFIG_PATH_ENV)
        if path:
            config = _deep_merge(config, self._load_yaml_config(path))

        config = _deep_merge(config, self._load_env_overrides())
        self._validate_config(config)
        self._configs = config
        logging.getLogger(__name__).debug("Configuration loaded", extra={'config_path': path})

    @staticmethod
    def _load_yaml_config(file_path: str) -> Dict[str, Any]:
        """Load a YAML configuration file."""
        try:
            with open(file_path, 'r') as f:
                config = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigurationError(f"Cannot read configuration file {file_path}: {e}")
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {file_path}: {e}")
        if not isinstance(config, dict):
            raise ConfigurationError(f"Configuration file {file_path} must contain a mapping")
        return config

    @staticmethod
    def _load_env_overrides() -> Dict[str, Any]:
        overrides: Dict[str, Any] = {}
        for name, raw in os.environ.items():
            if not name.startswith(ENV_PREFIX) or '__' not in name:
                continue
            section, _, key = name[len(ENV_PREFIX):].lower().partition('__')
            if section not in DEFAULT_CONFIG:
                continue
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError:
                value = raw
            if key == 'level' and isinstance(value, str):
                value = value.upper()
            overrides.setdefault(section, {})[key] = value
        return overrides

    @staticmethod
    def _validate_config(config: Dict[str, Any]):
        try:
            jsonschema.validate(instance=config, schema=CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            raise ConfigurationError(f"Invalid configuration: {e.message}")

    @lru_cache(maxsize=128)
    def get(self, key: str, default: Any = _MISSING) -> Any:
        """
        Retrieve a configuration value using dot notation, e.g. ``solver.gap_tol``.

        :param key: Dotted key
        :param default: Value returned when the key is absent
        :return: Configuration value
        """
        try:
            value = self._configs
            for k in key.split('.'):
                value = value[k]
            return value
        except (KeyError, TypeError):
            if default is not _MISSING:
                return default
            raise ConfigurationError(f"Configuration key '{key}' not found")

    def section(self, name: str) -> Dict[str, Any]:
        return copy.deepcopy(self.get(name))

    def as_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._configs)

    def reload(self):
        """Reload all configuration sources, clearing the lookup cache."""
        self.get.cache_clear()
        self._load_configurations()

    @classmethod
    def reset(cls):
        """Drop the shared instance (used by tests and the CLI ``--config`` flag)."""
        if cls._instance is not None:
            cls._instance.get.cache_clear()
        cls._instance = None


def get_config_manager(config_path: Optional[str] = None) -> ConfigManager:
    return ConfigManager(config_path)


def get_config(key: str, default: Any = _MISSING) -> Any:
    """
    Convenience function for getting configuration values.
    """
    return get_config_manager().get(key, default)
