"""
Feed-forward ReLU transition networks.

A :class:`NeuralNet` maps the current state and action to the next state:
hidden layers use ReLU, the final layer is linear with one output per state
variable. Bounds on every hidden unit come from interval propagation over
the declared variable box.
"""

import logging
from enum import Enum
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
import jsonschema

from .errors import (
    DimensionMismatchError,
    InstanceValidationError,
    NonFiniteWeightError,
    UnboundedDomainError,
)

logger = logging.getLogger(__name__)

NETWORK_SCHEMA = {
    'type': 'object',
    'required': ['layers', 'state_inputs', 'action_inputs', 'output_states'],
    'properties': {
        'widths': {'type': 'array', 'items': {'type': 'integer', 'minimum': 1}, 'minItems': 2},
        'layers': {
            'type': 'array',
            'minItems': 1,
            'items': {
                'type': 'object',
                'required': ['w', 'b', 'act'],
                'properties': {
                    'w': {'type': 'array', 'items': {'type': 'array', 'items': {'type': 'number'}}},
                    'b': {'type': 'array', 'items': {'type': 'number'}},
                    'act': {'enum': ['relu', 'linear']},
                },
            },
        },
        'state_inputs': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}},
        'action_inputs': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}},
        'output_states': {'type': 'array', 'items': {'type': 'integer', 'minimum': 0}},
    },
}


class Activation(str, Enum):
    RELU = 'relu'
    LINEAR = 'linear'


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class ActivationRecord:
    """Per hidden unit (flattened, layer by layer): pre-activation and output."""
    pre: np.ndarray
    values: np.ndarray

    @property
    def bits(self) -> np.ndarray:
        # a pre-activation of exactly 0 records bit 0
        return self.pre > 0.0


@dataclass(frozen=True)
class UnitBounds:
    pre_lo: float
    pre_hi: float

    @property
    def out_hi(self) -> float:
        return max(0.0, self.pre_hi)

    @property
    def big_m(self) -> float:
        return max(self.pre_hi, -self.pre_lo, 0.0)

    @property
    def is_dead(self) -> bool:
        return self.pre_hi <= 0.0


class NetworkBounds(Sequence[UnitBounds]):
    """
    UnitBounds per hidden unit plus the interval of every output unit.
    """

    def __init__(self, units: Sequence[UnitBounds], output_lo: np.ndarray, output_hi: np.ndarray):
        self.units: Tuple[UnitBounds, ...] = tuple(units)
        self.output_lo = _frozen(output_lo)
        self.output_hi = _frozen(output_hi)

    def __getitem__(self, index):
        return self.units[index]

    def __len__(self) -> int:
        return len(self.units)

    @property
    def global_big_m(self) -> float:
        return max((unit.big_m for unit in self.units), default=0.0)

    @property
    def live_units(self) -> List[int]:
        return [u for u, unit in enumerate(self.units) if not unit.is_dead]

    def __repr__(self) -> str:
        return f"NetworkBounds(units={len(self.units)}, global_big_m={self.global_big_m:.4g})"


@dataclass(frozen=True, eq=False)
class NeuralNet:
    """
    Layered ReLU network with a linear output layer.

    :param layers: Affine layers; all but the last are ReLU
    :param state_inputs: Input slot of each state variable, in declared order
    :param action_inputs: Input slot of each action variable, in declared order
    :param output_states: State variable index produced by each output slot
    """
    layers: Tuple[DenseLayer, ...]
    state_inputs: Tuple[int, ...]
    action_inputs: Tuple[int, ...]
    output_states: Tuple[int, ...]

    def __post_init__(self):
        if not self.layers:
            raise DimensionMismatchError("network has no layers", layer=0)
        width = self.input_width
        for index, layer in enumerate(self.layers):
            if layer.weights.ndim != 2 or layer.fan_in != width:
                raise DimensionMismatchError(
                    f"layer {index} expects {layer.weights.shape[-1] if layer.weights.ndim == 2 else '?'} "
                    f"inputs but receives {width}", layer=index)
            if layer.bias.shape != (layer.width,):
                raise DimensionMismatchError(
                    f"layer {index} bias has length {layer.bias.size}, expected {layer.width}", layer=index)
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                raise NonFiniteWeightError(f"layer {index} has non-finite weights or biases", layer=index)
            last = index == len(self.layers) - 1
            if last and layer.activation is not Activation.LINEAR:
                raise InstanceValidationError("final layer must be linear")
            if not last and layer.activation is not Activation.RELU:
                raise InstanceValidationError(f"hidden layer {index} must be relu")
            width = layer.width

        num_states = len(self.state_inputs)
        slots = sorted(self.state_inputs + self.action_inputs)
        if slots != list(range(self.input_width)):
            raise DimensionMismatchError(
                f"state and action inputs must cover input slots 0..{self.input_width - 1} exactly", layer=0)
        if self.output_width != num_states:
            raise DimensionMismatchError(
                f"output width {self.output_width} differs from state count {num_states}",
                layer=len(self.layers) - 1)
        if sorted(self.output_states) != list(range(num_states)):
            raise DimensionMismatchError("output_states must map one output to every state variable",
                                         layer=len(self.layers) - 1)

    # -- shape -------------------------------------------------------------

    @property
    def input_width(self) -> int:
        return len(self.state_inputs) + len(self.action_inputs)

    @property
    def output_width(self) -> int:
        return self.layers[-1].width

    @property
    def num_states(self) -> int:
        return len(self.state_inputs)

    @property
    def num_actions(self) -> int:
        return len(self.action_inputs)

    @property
    def widths(self) -> Tuple[int, ...]:
        return (self.input_width,) + tuple(layer.width for layer in self.layers)

    @property
    def structure(self) -> str:
        return ':'.join(str(w) for w in self.widths)

    @property
    def hidden_layers(self) -> Tuple[DenseLayer, ...]:
        return self.layers[:-1]

    @property
    def num_hidden(self) -> int:
        return sum(layer.width for layer in self.hidden_layers)

    def layer_offsets(self) -> List[int]:
        """First flattened unit id of every hidden layer."""
        offsets, total = [], 0
        for layer in self.hidden_layers:
            offsets.append(total)
            total += layer.width
        return offsets

    # -- evaluation --------------------------------------------------------

    def assemble_input(self, state: Sequence[float], action: Sequence[float]) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        action = np.asarray(action, dtype=float)
        if state.shape != (self.num_states,) or action.shape != (self.num_actions,):
            raise DimensionMismatchError(
                f"expected {self.num_states} state and {self.num_actions} action values", layer=0)
        x = np.empty(self.input_width)
        x[list(self.state_inputs)] = state
        x[list(self.action_inputs)] = action
        return x

    def next_state(self, output: np.ndarray) -> np.ndarray:
        state = np.empty(self.num_states)
        state[list(self.output_states)] = output
        return state

    def forward(self, x: Sequence[float]) -> Tuple[np.ndarray, ActivationRecord]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_width,):
            raise DimensionMismatchError(
                f"input has length {x.size}, network expects {self.input_width}", layer=0)
        if not np.all(np.isfinite(x)):
            raise ValueError("network input must be finite")
        pre_parts, value_parts = [], []
        h = x
        for layer in self.hidden_layers:
            pre = layer.weights @ h + layer.bias
            h = np.maximum(pre, 0.0)
            pre_parts.append(pre)
            value_parts.append(h)
        output = self.layers[-1].weights @ h + self.layers[-1].bias
        record = ActivationRecord(
            pre=np.concatenate(pre_parts) if pre_parts else np.zeros(0),
            values=np.concatenate(value_parts) if value_parts else np.zeros(0))
        return output, record

    def step(self, state: Sequence[float], action: Sequence[float]) -> Tuple[np.ndarray, ActivationRecord]:
        """One transition: next state vector and the activation record."""
        output, record = self.forward(self.assemble_input(state, action))
        return self.next_state(output), record

    def to_document(self) -> Dict[str, Any]:
        return {
            'widths': list(self.widths),
            'layers': [{'w': layer.weights.tolist(), 'b': layer.bias.tolist(), 'act': layer.activation.value}
                       for layer in self.layers],
            'state_inputs': list(self.state_inputs),
            'action_inputs': list(self.action_inputs),
            'output_states': list(self.output_states),
        }


def build_network(layers: Sequence[Tuple[Any, Any, str]], state_inputs: Sequence[int],
                  action_inputs: Sequence[int], output_states: Sequence[int]) -> NeuralNet:
    """
    Construct a network from ``(weights, bias, activation)`` triples.
    """
    dense = []
    for index, (w, b, act) in enumerate(layers):
        try:
            dense.append(DenseLayer(_frozen(np.atleast_2d(w) if np.size(w) else np.zeros((len(b), 0))),
                                    _frozen(b), Activation(act)))
        except ValueError as e:
            raise DimensionMismatchError(f"layer {index} weights are not a rectangular matrix: {e}",
                                         layer=index)
    return NeuralNet(tuple(dense), tuple(int(i) for i in state_inputs),
                     tuple(int(i) for i in action_inputs), tuple(int(i) for i in output_states))


def load_network(document: Mapping[str, Any]) -> NeuralNet:
    """
    Build a network from its JSON document.

    :param document: Network section (or a full instance document with a ``network`` key)
    :return: Validated NeuralNet
    """
    if 'network' in document and 'layers' not in document:
        document = document['network']
    try:
        jsonschema.validate(instance=document, schema=NETWORK_SCHEMA)
    except jsonschema.ValidationError as e:
        raise InstanceValidationError(f"Invalid network document: {e.message}")

    layers = []
    for index, layer in enumerate(document['layers']):
        rows = layer['w']
        if rows and len({len(row) for row in rows}) > 1:
            raise DimensionMismatchError(f"layer {index} weight rows have different lengths", layer=index)
        if len(rows) != len(layer['b']):
            raise DimensionMismatchError(
                f"layer {index} has {len(rows)} weight rows but {len(layer['b'])} biases", layer=index)
        layers.append((rows, layer['b'], layer['act']))
    net = build_network(layers, document['state_inputs'], document['action_inputs'], document['output_states'])

    widths = document.get('widths')
    if widths is not None and list(widths) != list(net.widths):
        raise DimensionMismatchError(
            f"declared widths {':'.join(map(str, widths))} do not match layers {net.structure}",
            layer=_first_width_mismatch(widths, net.widths))
    logger.debug("Loaded network %s with %d hidden units", net.structure, net.num_hidden)
    return net


def _first_width_mismatch(declared: Sequence[int], actual: Sequence[int]) -> int:
    for index, (a, b) in enumerate(zip(declared, actual)):
        if a != b:
            return max(index - 1, 0)
    return min(len(declared), len(actual)) - 1


def forward(net: NeuralNet, x: Sequence[float]) -> Tuple[np.ndarray, ActivationRecord]:
    """Evaluate ``net`` on the raw input vector ``x`` (network slot order)."""
    return net.forward(x)


Box = Union[Sequence[Tuple[float, float]], np.ndarray]


def propagate_bounds(net: NeuralNet, box: Box) -> NetworkBounds:
    """
    Interval propagation of an input box through the network.

    :param net: Network
    :param box: ``[lo, hi]`` per input slot
    :return: NetworkBounds with one UnitBounds per hidden unit
    """
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if box.shape[0] != net.input_width:
        raise DimensionMismatchError(
            f"box has {box.shape[0]} entries, network expects {net.input_width}", layer=0)
    if not np.all(np.isfinite(box)):
        raise UnboundedDomainError("bound propagation requires finite variable domains")
    lo, hi = box[:, 0], box[:, 1]
    if np.any(lo > hi):
        raise InstanceValidationError("box has lo > hi")

    units: List[UnitBounds] = []
    for layer in net.layers:
        w_pos = np.maximum(layer.weights, 0.0)
        w_neg = np.minimum(layer.weights, 0.0)
        pre_lo = w_pos @ lo + w_neg @ hi + layer.bias
        pre_hi = w_pos @ hi + w_neg @ lo + layer.bias
        if layer.activation is Activation.RELU:
            units.extend(UnitBounds(float(a), float(b)) for a, b in zip(pre_lo, pre_hi))
            lo, hi = np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
        else:
            lo, hi = pre_lo, pre_hi
    return NetworkBounds(units, lo, hi)
