import json

import numpy as np
import pytest

from conftest import make_instance
from hdplan.domains import DomainSpec, generate
from hdplan.errors import DimensionMismatchError, InstanceValidationError
from hdplan.instance_io import (
    dump_instance,
    dumps_instance,
    instance_from_document,
    instance_to_document,
    load_instance,
)
from hdplan.problem import AbsTerm, RewardSpec


@pytest.fixture
def document(shifted_instance, shifted_net):
    return instance_to_document(shifted_instance, shifted_net)


class TestDocument:

    def test_file_round_trip(self, tmp_path, rng):
        instance, net = generate(DomainSpec('reservoir', size=2, horizon=4, seed=6))
        path = tmp_path / 'reservoir.json'
        dump_instance(instance, net, str(path))
        loaded, loaded_net = load_instance(str(path))
        assert loaded == instance
        assert loaded.metadata['synthetic'] is True
        assert loaded.metadata['rain'] == instance.metadata['rain']
        x = rng.uniform(0.0, 20.0, net.input_width)
        np.testing.assert_array_equal(loaded_net.forward(x)[0], net.forward(x)[0])

    def test_fixed_and_interval_initial(self, relu_net):
        instance = make_instance([(0.0, 4.0), (0.0, 4.0)], [(-1.0, 1.0)], RewardSpec((1.0, 0.0), (0.0,)),
                                 initial=[(1.0, 1.0), (0.5, 2.0)])
        assert instance_to_document(instance, relu_net)['initial'] == [1.0, [0.5, 2.0]]

    def test_goal_defaults_to_domain(self, document):
        del document['goal']
        instance, _ = instance_from_document(document)
        assert instance.goal == ((-1.0, 1.0),)

    def test_null_goal_entry(self, document):
        document['goal'] = [None]
        instance, _ = instance_from_document(document)
        assert instance.goal == ((-1.0, 1.0),)

    def test_goal_length(self, document):
        document['goal'] = [None, None]
        with pytest.raises(InstanceValidationError):
            instance_from_document(document)

    def test_abs_terms_and_constraints(self, shifted_net, budget_constraint):
        instance = make_instance(
            [(-1.0, 1.0)], [(-1.0, 1.0)],
            RewardSpec((0.0,), (0.2,), 0.5, (AbsTerm(1.0, (1.0,), (0.0,), 0.3),)),
            constraints=(budget_constraint,))
        loaded, _ = instance_from_document(json.loads(dumps_instance(instance, shifted_net)))
        assert loaded.reward == instance.reward
        assert loaded.constraints == instance.constraints


class TestValidation:

    @pytest.mark.parametrize('mutate', [
        lambda d: d.pop('network'),
        lambda d: d.update(horizon=0),
        lambda d: d.update(horizon=1.5),
        lambda d: d['reward']['abs_terms'].append({'weight': -1.0, 'state': [1.0], 'action': [0.0]}),
        lambda d: d['constraints'].append({'state': [1.0], 'action': [1.0], 'sense': '<', 'rhs': 0.0}),
        lambda d: d.update(initial=[[0.0, 0.1, 0.2]]),
    ])
    def test_schema_errors(self, document, mutate):
        mutate(document)
        with pytest.raises(InstanceValidationError):
            instance_from_document(document)

    def test_error_names_the_path(self, document):
        document['state_vars'][0]['lo'] = 'low'
        with pytest.raises(InstanceValidationError, match='state_vars/0/lo'):
            instance_from_document(document)

    def test_network_and_variables_disagree(self, document):
        document['action_vars'].append({'name': 'b', 'lo': 0.0, 'hi': 1.0})
        document['reward']['action'].append(0.0)
        with pytest.raises(DimensionMismatchError):
            instance_from_document(document)

    def test_not_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"network": ')
        with pytest.raises(InstanceValidationError):
            load_instance(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_instance(str(tmp_path / 'absent.json'))
