"""
Building blocks of the big-M planning encoding.

:class:`EncodingBuilder` writes variables and rows for one time step at a
time. The full-horizon compiler and the one-step potential subproblems share
it so both see exactly the same ReLU, output and reward constraints.
"""

from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .milp_core.model import INF, Model, Sense, VarType
from .nn_model import NetworkBounds, NeuralNet
from .problem import PlanningInstance

Expression = Tuple[Dict[int, float], float]


class VarKind(str, Enum):
    ACTION = 'X'
    STATE = 'Y'
    RELU = 'P'
    BIT = 'Pb'
    INTERVAL = 'Pi'
    ABS = 'Z'


class VarKey(NamedTuple):
    kind: VarKind
    entity: int
    t: int
    interval: int = 0


def _name(key: VarKey) -> str:
    if key.kind is VarKind.ACTION:
        return f'X_a{key.entity}_t{key.t}'
    if key.kind is VarKind.STATE:
        return f'Y_s{key.entity}_t{key.t}'
    if key.kind is VarKind.RELU:
        return f'P_u{key.entity}_t{key.t}'
    if key.kind is VarKind.BIT:
        return f'Pb_u{key.entity}_t{key.t}'
    if key.kind is VarKind.INTERVAL:
        return f'Pi_{key.interval}_u{key.entity}_t{key.t}'
    return f'Z_r{key.entity}_t{key.t}'


def _add_terms(target: Dict[int, float], terms: Dict[int, float], scale: float = 1.0):
    for var_id, value in terms.items():
        target[var_id] = target.get(var_id, 0.0) + scale * value


class EncodingBuilder:
    """
    Step-wise writer of the planning encoding into a :class:`Model`.

    :param model: Target model
    :param instance: Planning instance (domains, constraints, reward)
    :param net: Transition network
    :param bounds: Interval bounds of every hidden unit over the instance box
    """

    def __init__(self, model: Model, instance: PlanningInstance, net: NeuralNet, bounds: NetworkBounds):
        instance.check_network(net)
        self.model = model
        self.instance = instance
        self.net = net
        self.bounds = bounds
        self.var_index: Dict[VarKey, int] = {}
        self._reward_cache: Dict[int, Expression] = {}

        # flattened unit id -> (layer, row)
        self._units: List[Tuple[int, int]] = []
        for layer_index, layer in enumerate(net.hidden_layers):
            self._units.extend((layer_index, row) for row in range(layer.width))
        self._offsets = net.layer_offsets()

    # -- variables ---------------------------------------------------------

    def _add(self, key: VarKey, lo: float, hi: float, kind: VarType = VarType.CONTINUOUS) -> int:
        var_id = self.model.add_variable(_name(key), lo, hi, kind)
        self.var_index[key] = var_id
        return var_id

    def var(self, kind: VarKind, entity: int, t: int, interval: int = 0) -> int:
        return self.var_index[VarKey(kind, entity, t, interval)]

    def add_states(self, t: int, bounded: bool = True):
        for i, var in enumerate(self.instance.state_vars):
            lo, hi = (var.lo, var.hi) if bounded else (-INF, INF)
            self._add(VarKey(VarKind.STATE, i, t), lo, hi)

    def add_actions(self, t: int):
        for i, var in enumerate(self.instance.action_vars):
            self._add(VarKey(VarKind.ACTION, i, t), var.lo, var.hi)

    @property
    def num_units(self) -> int:
        return len(self._units)

    @property
    def live_units(self) -> List[int]:
        return self.bounds.live_units

    # -- transition --------------------------------------------------------

    def _slot_vars(self, t: int) -> List[int]:
        slots = [0] * self.net.input_width
        for i, slot in enumerate(self.net.state_inputs):
            slots[slot] = self.var(VarKind.STATE, i, t)
        for i, slot in enumerate(self.net.action_inputs):
            slots[slot] = self.var(VarKind.ACTION, i, t)
        return slots

    def _layer_inputs(self, layer_index: int, t: int) -> List[int]:
        if layer_index == 0:
            return self._slot_vars(t)
        offset = self._offsets[layer_index - 1]
        width = self.net.layers[layer_index - 1].width
        return [self.var(VarKind.RELU, offset + j, t) for j in range(width)]

    def _weighted_input(self, layer_index: int, row: int, t: int) -> Expression:
        layer = self.net.layers[layer_index]
        inputs = self._layer_inputs(layer_index, t)
        coeffs: Dict[int, float] = {}
        for var_id, weight in zip(inputs, layer.weights[row]):
            if weight != 0.0:
                coeffs[var_id] = coeffs.get(var_id, 0.0) + float(weight)
        return coeffs, float(layer.bias[row])

    def unit_input(self, unit: int, t: int) -> Expression:
        """In(u, t) as (coefficients, constant)."""
        layer_index, row = self._units[unit]
        return self._weighted_input(layer_index, row, t)

    def add_transition(self, t: int, dead_bits_off: bool = False):
        """
        ReLU rows of every hidden unit at step ``t`` and the output equalities
        linking ``Y_{t+1}`` to the final layer. States at t and t+1 and actions
        at t must already exist.
        """
        model = self.model
        for unit, bound in enumerate(self.bounds):
            p = self._add(VarKey(VarKind.RELU, unit, t), 0.0, bound.out_hi)
            bit_hi = 0.0 if dead_bits_off and bound.is_dead else 1.0
            pb = self._add(VarKey(VarKind.BIT, unit, t), 0.0, bit_hi, VarType.BINARY)
            big_m = bound.big_m
            coeffs, const = self.unit_input(unit, t)

            model.add_constraint({p: 1.0, pb: -big_m}, Sense.LE, 0.0, f'relu_ub_on_u{unit}_t{t}')
            row = {p: 1.0, pb: big_m}
            _add_terms(row, coeffs, -1.0)
            model.add_constraint(row, Sense.LE, big_m + const, f'relu_ub_in_u{unit}_t{t}')
            row = {p: 1.0}
            _add_terms(row, coeffs, -1.0)
            model.add_constraint(row, Sense.GE, const, f'relu_lb_u{unit}_t{t}')

        last = len(self.net.layers) - 1
        for slot, state in enumerate(self.net.output_states):
            coeffs, const = self._weighted_input(last, slot, t)
            row = {self.var(VarKind.STATE, state, t + 1): 1.0}
            _add_terms(row, coeffs, -1.0)
            model.add_constraint(row, Sense.EQ, const, f'out_s{state}_t{t}')

    def add_global_constraints(self, t: int):
        for k, con in enumerate(self.instance.constraints):
            row: Dict[int, float] = {}
            for i, value in enumerate(con.state_coeffs):
                if value != 0.0:
                    row[self.var(VarKind.STATE, i, t)] = float(value)
            for i, value in enumerate(con.action_coeffs):
                if value != 0.0:
                    row[self.var(VarKind.ACTION, i, t)] = float(value)
            self.model.add_constraint(row, con.sense, con.rhs, f'glob_{k}_t{t}')

    # -- reward ------------------------------------------------------------

    def _linear(self, state_coeffs: Sequence[float], action_coeffs: Sequence[float], t: int) -> Dict[int, float]:
        coeffs: Dict[int, float] = {}
        for i, value in enumerate(state_coeffs):
            if value != 0.0:
                coeffs[self.var(VarKind.STATE, i, t + 1)] = float(value)
        for i, value in enumerate(action_coeffs):
            if value != 0.0:
                coeffs[self.var(VarKind.ACTION, i, t)] = float(value)
        return coeffs

    def reward_expression(self, t: int) -> Expression:
        """
        R(Y_{t+1}, X_t) as a linear expression. Every absolute-value term gets
        an auxiliary ``Z >= |e|`` written on first use.
        """
        if t in self._reward_cache:
            return self._reward_cache[t]
        spec = self.instance.reward
        coeffs = self._linear(spec.state_coeffs, spec.action_coeffs, t)
        for k, term in enumerate(spec.abs_terms):
            if term.weight == 0.0:
                continue
            z = self._add(VarKey(VarKind.ABS, k, t), 0.0, INF)
            inner = self._linear(term.state_coeffs, term.action_coeffs, t)
            row = {z: 1.0}
            _add_terms(row, inner, -1.0)
            self.model.add_constraint(row, Sense.GE, -term.target, f'abs_pos_r{k}_t{t}')
            row = {z: 1.0}
            _add_terms(row, inner, 1.0)
            self.model.add_constraint(row, Sense.GE, term.target, f'abs_neg_r{k}_t{t}')
            coeffs[z] = coeffs.get(z, 0.0) - term.weight
        expression = (coeffs, float(spec.constant))
        self._reward_cache[t] = expression
        return expression

    # -- interval features -------------------------------------------------

    def add_interval_block(self, t: int, intervals: int):
        """
        Interval indicators of every live unit: exactly one is set when the
        unit is on, and it pins P into ``[N_u (i-1)/N, N_u i/N]``.
        """
        model = self.model
        for unit in self.live_units:
            n_u = self.bounds[unit].out_hi
            p = self.var(VarKind.RELU, unit, t)
            pb = self.var(VarKind.BIT, unit, t)
            link = {pb: -1.0}
            for i in range(1, intervals + 1):
                pi = self._add(VarKey(VarKind.INTERVAL, unit, t, i), 0.0, 1.0, VarType.BINARY)
                link[pi] = 1.0
                lower = n_u * (i - 1) / intervals
                if lower > 0.0:
                    model.add_constraint({p: 1.0, pi: -lower}, Sense.GE, 0.0, f'interval_lo_{i}_u{unit}_t{t}')
                slack = n_u - n_u * i / intervals
                if slack > 0.0:
                    model.add_constraint({p: 1.0, pi: slack}, Sense.LE, n_u, f'interval_hi_{i}_u{unit}_t{t}')
            model.add_constraint(link, Sense.EQ, 0.0, f'interval_link_u{unit}_t{t}')

    def potentials_expression(self, t: int, v_off: np.ndarray, v_on: np.ndarray) -> Expression:
        """Sum of v_on * Pi + v_off * (1 - Pb) over all units at step ``t``."""
        coeffs: Dict[int, float] = {}
        constant = 0.0
        live = set(self.live_units)
        for unit in range(self.num_units):
            off = float(v_off[unit])
            constant += off
            if off != 0.0:
                pb = self.var(VarKind.BIT, unit, t)
                coeffs[pb] = coeffs.get(pb, 0.0) - off
            if unit not in live:
                continue
            for i, value in enumerate(v_on[unit], start=1):
                if value != 0.0:
                    coeffs[self.var(VarKind.INTERVAL, unit, t, i)] = float(value)
        return coeffs, constant

    def fix_pattern(self, t: int, pattern: Sequence[int], intervals: Optional[int]):
        """Fix bits (and interval indicators) of step ``t`` to ``pattern``."""
        live = set(self.live_units)
        for unit, level in enumerate(pattern):
            bit = 1.0 if level > 0 else 0.0
            self.model.set_bounds(self.var(VarKind.BIT, unit, t), bit, bit)
            if intervals and unit in live:
                for i in range(1, intervals + 1):
                    value = 1.0 if level == i else 0.0
                    self.model.set_bounds(self.var(VarKind.INTERVAL, unit, t, i), value, value)

    def read_pattern(self, x: np.ndarray, t: int, intervals: Optional[int]) -> Tuple[int, ...]:
        """Pattern of step ``t`` in a solution: 0 = off, i = on in interval i."""
        live = set(self.live_units)
        pattern = []
        for unit in range(self.num_units):
            if x[self.var(VarKind.BIT, unit, t)] < 0.5:
                pattern.append(0)
            elif intervals and unit in live:
                values = [x[self.var(VarKind.INTERVAL, unit, t, i)] for i in range(1, intervals + 1)]
                pattern.append(int(np.argmax(values)) + 1)
            else:
                pattern.append(1)
        return tuple(pattern)
