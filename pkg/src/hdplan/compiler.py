"""
Compilation of a planning instance and its transition network into a MILP.

The base model is the big-M encoding over the whole horizon. The strengthened
model adds, at every step, the reward-potential cap on the step reward and
the interval indicators that feed it.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .encoding import EncodingBuilder, VarKey, VarKind
from .errors import InfeasibleError, PotentialMismatchError, UnboundedError
from .milp_core import LpParams, Model, ObjectiveSense, Sense, SolveStatus, solve_lp
from .nn_model import NetworkBounds, NeuralNet
from .potentials import RewardPotentials
from .problem import Plan, PlanningInstance

logger = logging.getLogger(__name__)


@dataclass
class CompiledModel:
    model: Model
    var_index: Dict[VarKey, int]
    horizon: int
    intervals: int
    instance: PlanningInstance
    net: NeuralNet
    bounds: NetworkBounds

    def variable(self, kind: VarKind, entity: int, t: int, interval: int = 0) -> int:
        return self.var_index[VarKey(kind, entity, t, interval)]

    @property
    def num_binaries(self) -> int:
        return self.model.num_binaries

    def extract_plan(self, x: np.ndarray) -> Plan:
        """Read the action and state values of a solution into a Plan."""
        instance = self.instance
        actions = np.array([[x[self.variable(VarKind.ACTION, i, t)] for i in range(instance.num_actions)]
                            for t in range(1, self.horizon + 1)], dtype=float).reshape(self.horizon,
                                                                                      instance.num_actions)
        states = np.array([[x[self.variable(VarKind.STATE, i, t)] for i in range(instance.num_states)]
                           for t in range(1, self.horizon + 2)], dtype=float)
        return Plan(actions, states, self.model.objective_value(x))


def _build(instance: PlanningInstance, net: NeuralNet, bounds: NetworkBounds, name: str,
           strengthen_dead: bool = False):
    if len(bounds) != net.num_hidden:
        raise PotentialMismatchError(f"bounds cover {len(bounds)} units, network has {net.num_hidden}")
    model = Model(name)
    builder = EncodingBuilder(model, instance, net, bounds)
    horizon = instance.horizon

    for t in range(1, horizon + 2):
        builder.add_states(t)
    for t in range(1, horizon + 1):
        builder.add_actions(t)

    # Initial state
    for i, (var, (lo, hi)) in enumerate(zip(instance.state_vars, instance.initial)):
        y = builder.var(VarKind.STATE, i, 1)
        if lo == hi:
            model.add_constraint({y: 1.0}, Sense.EQ, lo, f'init_s{i}')
            continue
        if lo > var.lo:
            model.add_constraint({y: 1.0}, Sense.GE, lo, f'init_lo_s{i}')
        if hi < var.hi:
            model.add_constraint({y: 1.0}, Sense.LE, hi, f'init_hi_s{i}')

    objective: Dict[int, float] = {}
    constant = 0.0
    for t in range(1, horizon + 1):
        builder.add_global_constraints(t)
        builder.add_transition(t, dead_bits_off=strengthen_dead)
        coeffs, const = builder.reward_expression(t)
        for var_id, value in coeffs.items():
            objective[var_id] = objective.get(var_id, 0.0) + value
        constant += const

    # Goal at H+1
    final = horizon + 1
    for i, (var, (lo, hi)) in enumerate(zip(instance.state_vars, instance.goal)):
        y = builder.var(VarKind.STATE, i, final)
        if lo > var.lo:
            model.add_constraint({y: 1.0}, Sense.GE, lo, f'goal_lo_s{i}')
        if hi < var.hi:
            model.add_constraint({y: 1.0}, Sense.LE, hi, f'goal_hi_s{i}')

    model.set_objective(objective, ObjectiveSense.MAXIMIZE, constant)
    return model, builder


def compile_base(instance: PlanningInstance, net: NeuralNet, bounds: NetworkBounds) -> CompiledModel:
    """
    Big-M planning MILP over the full horizon.

    :param instance: Planning instance
    :param net: Transition network
    :param bounds: Unit bounds over the instance's variable box
    :return: CompiledModel with one binary per unit and step
    """
    model, builder = _build(instance, net, bounds, f'{instance.name}_base')
    logger.debug("Compiled base model: %r", model)
    return CompiledModel(model, builder.var_index, instance.horizon, 0, instance, net, bounds)


def check_potentials(potentials: RewardPotentials, net: NeuralNet):
    if potentials.num_units != net.num_hidden:
        raise PotentialMismatchError(
            f"potentials cover {potentials.num_units} units, network has {net.num_hidden}")
    if potentials.structure and potentials.structure != net.structure:
        raise PotentialMismatchError(
            f"potentials were computed for network {potentials.structure}, not {net.structure}")


def compile_strengthened(instance: PlanningInstance, net: NeuralNet, bounds: NetworkBounds,
                         potentials: RewardPotentials) -> CompiledModel:
    """
    Base MILP plus, per step, the potential cap on the step reward, the
    interval indicators of every live unit and their linking rows.
    """
    check_potentials(potentials, net)
    model, builder = _build(instance, net, bounds, f'{instance.name}_n{potentials.intervals}',
                            strengthen_dead=True)
    for t in range(1, instance.horizon + 1):
        builder.add_interval_block(t, potentials.intervals)
        pot_coeffs, pot_const = builder.potentials_expression(t, potentials.v_off, potentials.v_on)
        reward_coeffs, reward_const = builder.reward_expression(t)
        row = dict(pot_coeffs)
        for var_id, value in reward_coeffs.items():
            row[var_id] = row.get(var_id, 0.0) - value
        model.add_constraint(row, Sense.GE, reward_const - pot_const, f'potential_bound_t{t}')
    logger.debug("Compiled strengthened model: %r", model)
    return CompiledModel(model, builder.var_index, instance.horizon, potentials.intervals, instance, net, bounds)


def root_relaxation(compiled: CompiledModel, params: Optional[LpParams] = None) -> float:
    """Objective of the LP relaxation (an upper bound on the MILP optimum)."""
    result = solve_lp(compiled.model.relaxed(), params)
    if result.status is SolveStatus.INFEASIBLE:
        raise InfeasibleError("root relaxation is infeasible")
    if result.status is SolveStatus.UNBOUNDED:
        raise UnboundedError("root relaxation is unbounded")
    return result.objective
