import logging
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, 'src'))

from hdplan.config_manager import ConfigManager  # noqa: E402
from hdplan.milp_core.model import Sense  # noqa: E402
from hdplan.nn_model import build_network, propagate_bounds  # noqa: E402
from hdplan.problem import (  # noqa: E402
    AbsTerm,
    LinearInequality,
    PlanningInstance,
    RewardSpec,
    VariableDomain,
)


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    for name in list(os.environ):
        if name.startswith('HDPLAN_'):
            monkeypatch.delenv(name, raising=False)
    ConfigManager.reset()
    yield
    ConfigManager.reset()


def make_instance(state_domains, action_domains, reward, horizon=1, initial=None, goal=None, constraints=()):
    state_vars = tuple(VariableDomain(f's{i}', lo, hi) for i, (lo, hi) in enumerate(state_domains))
    action_vars = tuple(VariableDomain(f'a{i}', lo, hi) for i, (lo, hi) in enumerate(action_domains))
    if initial is None:
        initial = tuple((lo, hi) for lo, hi in state_domains)
    else:
        initial = tuple(v if isinstance(v, tuple) else (v, v) for v in initial)
    if goal is None:
        goal = tuple((lo, hi) for lo, hi in state_domains)
    return PlanningInstance(state_vars, action_vars, tuple(initial), tuple(goal), tuple(constraints), reward,
                            horizon, name='toy')


@pytest.fixture
def restore_logging():
    logger = logging.getLogger('hdplan')
    handlers, level, propagate = list(logger.handlers), logger.level, logger.propagate
    yield logger
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    for handler in handlers:
        logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = propagate


@pytest.fixture
def relu_net():
    """y' = relu(s); the action input has zero weight."""
    return build_network([([[1.0, 0.0]], [0.0], 'relu'), ([[1.0]], [0.0], 'linear')],
                         state_inputs=(0,), action_inputs=(1,), output_states=(0,))


@pytest.fixture
def relu_instance():
    """s in [0, 1], a in [-1, 1], reward y'."""
    reward = RewardSpec(state_coeffs=(1.0,), action_coeffs=(0.0,))
    return make_instance([(0.0, 1.0)], [(-1.0, 1.0)], reward)


@pytest.fixture
def relu_bounds(relu_net, relu_instance):
    return propagate_bounds(relu_net, relu_instance.input_box(relu_net))


@pytest.fixture
def shifted_net():
    """y' = relu(s + a)."""
    return build_network([([[1.0, 1.0]], [0.0], 'relu'), ([[1.0]], [0.0], 'linear')],
                         state_inputs=(0,), action_inputs=(1,), output_states=(0,))


@pytest.fixture
def shifted_instance():
    """One step of y' = relu(s + a), reward -|y' - 0.3| + 0.2 a; optimum 0.2 at s = -0.7, a = 1."""
    reward = RewardSpec(state_coeffs=(0.0,), action_coeffs=(0.2,),
                        abs_terms=(AbsTerm(1.0, (1.0,), (0.0,), 0.3),))
    return make_instance([(-1.0, 1.0)], [(-1.0, 1.0)], reward)


@pytest.fixture
def budget_constraint():
    return LinearInequality((1.0,), (1.0,), Sense.LE, 0.5, 'budget')


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
