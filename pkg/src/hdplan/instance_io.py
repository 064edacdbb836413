"""
Instance documents: one JSON file holding the network and the problem sections.
"""

import json
import logging
from typing import Any, Dict, Tuple

import jsonschema

from .errors import InstanceValidationError
from .milp_core.model import Sense
from .nn_model import NETWORK_SCHEMA, NeuralNet, load_network
from .problem import AbsTerm, LinearInequality, PlanningInstance, RewardSpec, VariableDomain

logger = logging.getLogger(__name__)

_NUMBERS = {'type': 'array', 'items': {'type': 'number'}}
_DOMAIN = {
    'type': 'object',
    'required': ['name', 'lo', 'hi'],
    'properties': {'name': {'type': 'string'}, 'lo': {'type': 'number'}, 'hi': {'type': 'number'}},
}
_INTERVAL = {'type': 'array', 'items': {'type': 'number'}, 'minItems': 2, 'maxItems': 2}

INSTANCE_SCHEMA = {
    'type': 'object',
    'required': ['network', 'state_vars', 'action_vars', 'initial', 'reward', 'horizon'],
    'properties': {
        'name': {'type': 'string'},
        'synthetic': {'type': 'boolean'},
        'metadata': {'type': 'object'},
        'network': NETWORK_SCHEMA,
        'state_vars': {'type': 'array', 'items': _DOMAIN},
        'action_vars': {'type': 'array', 'items': _DOMAIN},
        'initial': {'type': 'array', 'items': {'oneOf': [{'type': 'number'}, _INTERVAL]}},
        'goal': {'type': 'array', 'items': {'oneOf': [{'type': 'null'}, _INTERVAL]}},
        'constraints': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['state', 'action', 'sense', 'rhs'],
                'properties': {
                    'state': _NUMBERS,
                    'action': _NUMBERS,
                    'sense': {'enum': ['<=', '>=', '=']},
                    'rhs': {'type': 'number'},
                    'name': {'type': ['string', 'null']},
                },
            },
        },
        'reward': {
            'type': 'object',
            'required': ['state', 'action'],
            'properties': {
                'state': _NUMBERS,
                'action': _NUMBERS,
                'constant': {'type': 'number'},
                'abs_terms': {
                    'type': 'array',
                    'items': {
                        'type': 'object',
                        'required': ['weight', 'state', 'action'],
                        'properties': {
                            'weight': {'type': 'number', 'minimum': 0},
                            'state': _NUMBERS,
                            'action': _NUMBERS,
                            'target': {'type': 'number'},
                        },
                    },
                },
            },
        },
        'horizon': {'type': 'integer', 'minimum': 1},
    },
}


def instance_to_document(instance: PlanningInstance, net: NeuralNet) -> Dict[str, Any]:
    reward = instance.reward
    metadata = {k: v for k, v in instance.metadata.items() if k != 'synthetic'}
    return {
        'name': instance.name,
        'synthetic': bool(instance.metadata.get('synthetic', False)),
        'metadata': metadata,
        'network': net.to_document(),
        'state_vars': [{'name': v.name, 'lo': v.lo, 'hi': v.hi} for v in instance.state_vars],
        'action_vars': [{'name': v.name, 'lo': v.lo, 'hi': v.hi} for v in instance.action_vars],
        'initial': [lo if lo == hi else [lo, hi] for lo, hi in instance.initial],
        'goal': [[lo, hi] for lo, hi in instance.goal],
        'constraints': [{'state': list(c.state_coeffs), 'action': list(c.action_coeffs), 'sense': c.sense.value,
                         'rhs': c.rhs, 'name': c.name} for c in instance.constraints],
        'reward': {
            'state': list(reward.state_coeffs),
            'action': list(reward.action_coeffs),
            'constant': reward.constant,
            'abs_terms': [{'weight': t.weight, 'state': list(t.state_coeffs), 'action': list(t.action_coeffs),
                           'target': t.target} for t in reward.abs_terms],
        },
        'horizon': instance.horizon,
    }


def instance_from_document(document: Dict[str, Any]) -> Tuple[PlanningInstance, NeuralNet]:
    """
    Validate and build the instance and its network.

    :param document: Parsed instance JSON
    :return: (PlanningInstance, NeuralNet)
    """
    try:
        jsonschema.validate(instance=document, schema=INSTANCE_SCHEMA)
    except jsonschema.ValidationError as e:
        path = '/'.join(str(p) for p in e.absolute_path)
        raise InstanceValidationError(f"Invalid instance document at '{path}': {e.message}")

    net = load_network(document['network'])
    state_vars = tuple(VariableDomain(v['name'], float(v['lo']), float(v['hi'])) for v in document['state_vars'])
    action_vars = tuple(VariableDomain(v['name'], float(v['lo']), float(v['hi'])) for v in document['action_vars'])

    initial = []
    for value in document['initial']:
        lo, hi = (value, value) if isinstance(value, (int, float)) else value
        initial.append((float(lo), float(hi)))
    goal_entries = document.get('goal') or [None] * len(state_vars)
    if len(goal_entries) != len(state_vars):
        raise InstanceValidationError("goal needs one entry per state variable")
    goal = tuple((var.lo, var.hi) if entry is None else (float(entry[0]), float(entry[1]))
                 for var, entry in zip(state_vars, goal_entries))

    constraints = tuple(
        LinearInequality(tuple(map(float, c['state'])), tuple(map(float, c['action'])), Sense.parse(c['sense']),
                         float(c['rhs']), c.get('name'))
        for c in document.get('constraints', []))
    spec = document['reward']
    reward = RewardSpec(
        state_coeffs=tuple(map(float, spec['state'])),
        action_coeffs=tuple(map(float, spec['action'])),
        constant=float(spec.get('constant', 0.0)),
        abs_terms=tuple(AbsTerm(float(t['weight']), tuple(map(float, t['state'])), tuple(map(float, t['action'])),
                                float(t.get('target', 0.0))) for t in spec.get('abs_terms', [])))

    metadata = dict(document.get('metadata', {}))
    metadata['synthetic'] = bool(document.get('synthetic', False))
    instance = PlanningInstance(state_vars, action_vars, tuple(initial), goal, constraints, reward,
                                int(document['horizon']), document.get('name', 'instance'), metadata)
    instance.check_network(net)
    return instance, net


def dumps_instance(instance: PlanningInstance, net: NeuralNet) -> str:
    return json.dumps(instance_to_document(instance, net), indent=2, sort_keys=True) + '\n'


def dump_instance(instance: PlanningInstance, net: NeuralNet, path: str):
    with open(path, 'w') as f:
        f.write(dumps_instance(instance, net))
    logger.info("Wrote instance %s to %s", instance.name, path)


def load_instance(path: str) -> Tuple[PlanningInstance, NeuralNet]:
    try:
        with open(path, 'r') as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise InstanceValidationError(f"{path} is not valid JSON: {e}")
    return instance_from_document(document)
