"""
Optimal reward potentials by constraint generation.

Every hidden unit carries a deactivation potential ``v_off`` and one
activation potential per output interval ``v_on[i]``. Potentials are valid
when, for every feasible one-step transition, the potentials of its
activation pattern sum to at least the step reward. The loop alternates a
regularized master problem over the patterns seen so far with a MILP
subproblem that finds the most violated pattern.
"""

import json
import math
import time
import logging
import itertools
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .encoding import EncodingBuilder, VarKind
from .errors import (
    DegenerateInstanceError,
    InfeasibleError,
    NonterminationError,
    PotentialMismatchError,
    ScaleGuardError,
    SolverStatusError,
    UnboundedDomainError,
)
from .milp_core import (
    MilpParams,
    Model,
    ObjectiveSense,
    Sense,
    SolveStatus,
    solve_lp,
    solve_milp,
    solve_qp,
)
from .nn_model import ActivationRecord, NetworkBounds, NeuralNet
from .problem import PlanningInstance

logger = logging.getLogger(__name__)

Pattern = Tuple[int, ...]


@dataclass
class RewardPotentials:
    """
    :param v_off: Deactivation potential per unit, shape (|U|,)
    :param v_on: Activation potential per unit and interval, shape (|U|, N)
    :param intervals: Interval count N
    """
    v_off: np.ndarray
    v_on: np.ndarray
    intervals: int
    lam: float
    epsilon: float = 1e-6
    certified_violation: Optional[float] = None
    master_objective: Optional[float] = None
    structure: str = ''

    def __post_init__(self):
        self.v_off = np.asarray(self.v_off, dtype=float).reshape(-1)
        self.v_on = np.asarray(self.v_on, dtype=float).reshape(self.v_off.size, self.intervals)

    @property
    def num_units(self) -> int:
        return self.v_off.size

    @property
    def certified(self) -> bool:
        return self.certified_violation is not None and self.certified_violation <= self.epsilon

    def bound(self, pattern: Sequence[int]) -> float:
        """Sum of the potentials selected by ``pattern`` (0 = off, i = on in interval i)."""
        if len(pattern) != self.num_units:
            raise PotentialMismatchError(f"pattern has {len(pattern)} entries, potentials cover {self.num_units}")
        total = 0.0
        for unit, level in enumerate(pattern):
            total += self.v_off[unit] if level == 0 else self.v_on[unit, level - 1]
        return float(total)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'N': self.intervals,
            'lambda': self.lam,
            'epsilon': self.epsilon,
            'structure': self.structure,
            'certified_violation': self.certified_violation,
            'master_objective': self.master_objective,
            'units': [{'v_off': float(off), 'v_on': [float(v) for v in on]}
                      for off, on in zip(self.v_off, self.v_on)],
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'RewardPotentials':
        units = document['units']
        intervals = int(document['N'])
        v_on = np.array([unit['v_on'] for unit in units], dtype=float).reshape(len(units), intervals)
        return cls(v_off=np.array([unit['v_off'] for unit in units], dtype=float),
                   v_on=v_on,
                   intervals=intervals,
                   lam=float(document['lambda']),
                   epsilon=float(document.get('epsilon', 1e-6)),
                   certified_violation=document.get('certified_violation'),
                   master_objective=document.get('master_objective'),
                   structure=document.get('structure', ''))

    def write_json(self, path: str):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')

    @classmethod
    def load(cls, path: str) -> 'RewardPotentials':
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))


def pattern_from_forward(record: ActivationRecord, bounds: NetworkBounds, intervals: int) -> Pattern:
    """
    Pattern of a concrete transition. An active unit gets the first interval
    whose upper end covers its output.
    """
    pattern = []
    for unit, (active, value) in enumerate(zip(record.bits, record.values)):
        n_u = bounds[unit].out_hi
        if not active or n_u <= 0.0:
            pattern.append(0)
            continue
        level = int(math.ceil(value * intervals / n_u - 1e-9))
        pattern.append(min(max(level, 1), intervals))
    return tuple(pattern)


@dataclass
class CgIteration:
    k: int
    pattern: Pattern
    r_star: float
    violation: float
    master_objective: float
    elapsed: float


@dataclass
class CgTrace:
    epsilon: float
    iterations: List[CgIteration] = field(default_factory=list)

    def append(self, iteration: CgIteration):
        self.iterations.append(iteration)

    @property
    def cuts(self) -> List[Tuple[Pattern, float]]:
        """Patterns added to the master: every iteration whose violation exceeded epsilon."""
        return [(it.pattern, it.r_star) for it in self.iterations if it.violation > self.epsilon]

    @property
    def num_generated(self) -> int:
        return len(self.cuts)

    @property
    def final_violation(self) -> Optional[float]:
        return self.iterations[-1].violation if self.iterations else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{'k': it.k, 'violation': it.violation, 'master_obj': it.master_objective,
                              'elapsed': it.elapsed} for it in self.iterations],
                            columns=['k', 'violation', 'master_obj', 'elapsed'])

    def write_csv(self, path: str):
        self.to_frame().to_csv(path, index=False)


# -- master ----------------------------------------------------------------

def reward_magnitude_bound(instance: PlanningInstance, net: NeuralNet, bounds: NetworkBounds) -> float:
    """A-priori bound on |R| over the action box and the reachable next-state box."""
    next_lo = net.next_state(bounds.output_lo)
    next_hi = net.next_state(bounds.output_hi)
    state_mag = np.maximum(np.abs(next_lo), np.abs(next_hi))
    action_box = instance.action_box()
    action_mag = np.max(np.abs(action_box), axis=1) if action_box.size else np.zeros(0)
    spec = instance.reward
    total = abs(spec.constant) + float(np.abs(spec.state_coeffs) @ state_mag + np.abs(spec.action_coeffs) @ action_mag)
    for term in spec.abs_terms:
        total += term.weight * (float(np.abs(term.state_coeffs) @ state_mag + np.abs(term.action_coeffs) @ action_mag)
                                + abs(term.target))
    return total


def default_lambda(bounds: NetworkBounds) -> float:
    big_m = bounds.global_big_m
    return 1.0 / math.sqrt(big_m) if big_m > 0.0 else 1.0


def solve_master(trace: Union[CgTrace, Iterable[Tuple[Pattern, float]]], lam: float, bounds: NetworkBounds,
                 intervals: int, value_bound: float, epsilon: float = 1e-6) -> RewardPotentials:
    """
    Minimize the regularized potential sum subject to one covering row per pattern.

    :param trace: Trace (its cuts are used) or explicit ``(pattern, R*)`` pairs
    :param lam: Regularizer weight on the squared potentials
    :param bounds: Unit bounds; dead units get no activation potentials
    :param intervals: Interval count N
    :param value_bound: Potentials are confined to ``[-value_bound, value_bound]``
    :return: RewardPotentials (uncertified)
    """
    cuts = trace.cuts if isinstance(trace, CgTrace) else list(trace)
    num_units = len(bounds)
    live = set(bounds.live_units)

    model = Model('master')
    off_ids = [model.add_variable(f'v_off_u{u}', -value_bound, value_bound) for u in range(num_units)]
    on_ids: Dict[Tuple[int, int], int] = {}
    for u in sorted(live):
        for i in range(1, intervals + 1):
            on_ids[(u, i)] = model.add_variable(f'v_on_{i}_u{u}', -value_bound, value_bound)

    for k, (pattern, r_star) in enumerate(cuts):
        row: Dict[int, float] = {}
        for u, level in enumerate(pattern):
            if level == 0:
                row[off_ids[u]] = 1.0
            elif (u, level) in on_ids:
                row[on_ids[(u, level)]] = 1.0
        if not row:
            if r_star > epsilon:
                raise DegenerateInstanceError(
                    f"pattern {pattern} carries no potentials but needs to cover reward {r_star:.6g}")
            continue
        model.add_constraint(row, Sense.GE, r_star, f'cut_{k}')

    v_off = np.zeros(num_units)
    v_on = np.zeros((num_units, intervals))
    if model.num_variables == 0:
        return RewardPotentials(v_off, v_on, intervals, lam, epsilon, master_objective=0.0)

    ids = list(range(model.num_variables))
    model.set_objective({j: 1.0 for j in ids}, ObjectiveSense.MINIMIZE,
                        quadratic={j: lam for j in ids} if lam > 0.0 else None)
    result = solve_qp(model)
    x = result.x
    for u, var_id in enumerate(off_ids):
        v_off[u] = x[var_id]
    for (u, i), var_id in on_ids.items():
        v_on[u, i - 1] = x[var_id]
    return RewardPotentials(v_off, v_on, intervals, lam, epsilon, master_objective=float(result.objective))


# -- subproblem ------------------------------------------------------------

@dataclass
class SubproblemResult:
    pattern: Pattern
    r_star: float
    violation: float
    state: np.ndarray
    next_state: np.ndarray
    action: np.ndarray


class Subproblem:
    """
    One-step model of the most violated pattern: current state and action
    range over their domains subject to the global constraints, the next state
    is whatever the network produces.
    """

    def __init__(self, instance: PlanningInstance, net: NeuralNet, bounds: NetworkBounds, intervals: int,
                 params: Optional[MilpParams] = None):
        self.instance = instance
        self.intervals = intervals
        self.params = params or MilpParams(gap_tol=1e-9)
        self.model = Model('subproblem')
        builder = EncodingBuilder(self.model, instance, net, bounds)
        builder.add_states(1)
        builder.add_actions(1)
        builder.add_states(2, bounded=False)
        builder.add_global_constraints(1)
        builder.add_transition(1, dead_bits_off=True)
        builder.add_interval_block(1, intervals)
        self.reward = builder.reward_expression(1)
        self.builder = builder
        self.logger = logging.getLogger(f'{__name__}.Subproblem')

    def _values(self, x: np.ndarray, kind: VarKind, count: int, t: int) -> np.ndarray:
        return np.array([x[self.builder.var(kind, i, t)] for i in range(count)], dtype=float)

    def solve(self, potentials: RewardPotentials) -> SubproblemResult:
        reward_coeffs, reward_const = self.reward
        pot_coeffs, pot_const = self.builder.potentials_expression(1, potentials.v_off, potentials.v_on)
        objective = dict(reward_coeffs)
        for var_id, value in pot_coeffs.items():
            objective[var_id] = objective.get(var_id, 0.0) - value
        self.model.set_objective(objective, ObjectiveSense.MAXIMIZE, reward_const - pot_const)

        x, stats = solve_milp(self.model, self.params)
        if stats.status is SolveStatus.INFEASIBLE:
            raise InfeasibleError("learned planning problem infeasible: no feasible one-step transition")
        if stats.status is SolveStatus.UNBOUNDED:
            raise UnboundedDomainError("one-step reward is unbounded; check variable domains")
        if stats.status is not SolveStatus.OPTIMAL or x is None:
            raise SolverStatusError("subproblem did not prove optimality", status=stats.status.value)

        pattern = self.builder.read_pattern(x, 1, self.intervals)
        violation = float(stats.primal)
        instance = self.instance
        return SubproblemResult(pattern=pattern,
                                r_star=violation + potentials.bound(pattern),
                                violation=violation,
                                state=self._values(x, VarKind.STATE, instance.num_states, 1),
                                next_state=self._values(x, VarKind.STATE, instance.num_states, 2),
                                action=self._values(x, VarKind.ACTION, instance.num_actions, 1))


def solve_subproblem(net: NeuralNet, instance: PlanningInstance, bounds: NetworkBounds,
                     candidate: RewardPotentials, params: Optional[MilpParams] = None) -> SubproblemResult:
    """Most violated pattern for ``candidate`` and its violation."""
    if candidate.num_units != net.num_hidden:
        raise PotentialMismatchError(
            f"candidate covers {candidate.num_units} units, network has {net.num_hidden}")
    return Subproblem(instance, net, bounds, candidate.intervals, params).solve(candidate)


# -- constraint generation -------------------------------------------------

def _potentials_config():
    from .config_manager import get_config_manager
    return get_config_manager()


def compute_potentials(net: NeuralNet, instance: PlanningInstance, bounds: NetworkBounds,
                       intervals: Optional[int] = None, lam: Optional[float] = None,
                       epsilon: Optional[float] = None, max_iterations: Optional[int] = None,
                       config=None) -> Tuple[RewardPotentials, CgTrace]:
    """
    Constraint generation until no pattern violates the potentials by more than epsilon.

    :param net: Transition network
    :param instance: Planning instance (domains, global constraints, reward)
    :param bounds: Unit bounds over the instance box
    :param intervals: Interval count N (default from config)
    :param lam: Regularizer weight (default 1/sqrt(max big-M))
    :param epsilon: Violation tolerance
    :param max_iterations: Guard on generated patterns (default (N+1)^|U| capped at 1e6)
    :return: Certified potentials and the iteration trace
    """
    config = config or _potentials_config()
    intervals = intervals if intervals is not None else config.get('potentials.intervals')
    epsilon = epsilon if epsilon is not None else config.get('potentials.epsilon')
    if lam is None:
        lam = config.get('potentials.lambda')
    if lam is None:
        lam = default_lambda(bounds)
    if intervals < 1:
        raise ValueError("interval count must be at least 1")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")

    guard = max_iterations or config.get('potentials.max_iterations')
    if guard is None:
        guard = min((intervals + 1) ** len(bounds), 10 ** 6)

    params = MilpParams.from_config(config, gap_tol=config.get('potentials.subproblem_gap_tol'))
    params.time_limit = None
    params.node_limit = None

    value_bound = (len(bounds) + 1) * (reward_magnitude_bound(instance, net, bounds) + 1.0)
    subproblem = Subproblem(instance, net, bounds, intervals, params)
    trace = CgTrace(epsilon=epsilon)
    start = time.perf_counter()

    potentials = solve_master(trace, lam, bounds, intervals, value_bound, epsilon)
    k = 0
    while True:
        k += 1
        result = subproblem.solve(potentials)
        trace.append(CgIteration(k, result.pattern, result.r_star, result.violation,
                                 potentials.master_objective, time.perf_counter() - start))
        logger.info("Constraint generation iteration %d: violation %.3e", k, result.violation,
                    extra={'k': k, 'violation': result.violation, 'master_obj': potentials.master_objective})
        if result.violation <= epsilon:
            break
        if trace.num_generated > guard:
            raise NonterminationError(
                f"constraint generation produced more than {guard} patterns without certifying")
        potentials = solve_master(trace, lam, bounds, intervals, value_bound, epsilon)

    potentials.certified_violation = result.violation
    potentials.structure = net.structure
    logger.info("Potentials certified after %d iterations (%d patterns)", k, trace.num_generated)
    return potentials, trace


# -- brute force -----------------------------------------------------------

def _fixed_pattern_reward(model: Model, fixes: List[Tuple[int, float]]) -> Optional[float]:
    fixed = model.relaxed()
    for var_id, value in fixes:
        fixed.set_bounds(var_id, value, value)
    result = solve_lp(fixed)
    return result.objective if result.is_optimal else None


def enumerate_patterns(bounds: NetworkBounds, intervals: int) -> Iterable[Pattern]:
    live = set(bounds.live_units)
    choices = [range(intervals + 1) if u in live else (0,) for u in range(len(bounds))]
    return itertools.product(*choices)


def oracle_enumerate(net: NeuralNet, instance: PlanningInstance, bounds: NetworkBounds, intervals: int,
                     lam: float, epsilon: float = 1e-6, max_patterns: int = 100000,
                     n_jobs: int = 1) -> RewardPotentials:
    """
    Potentials from every activation pattern at once: one LP per pattern for
    its maximal reward, then a single master solve.
    """
    count = (intervals + 1) ** len(bounds.live_units)
    if count > max_patterns:
        raise ScaleGuardError(f"{count} patterns exceed the enumeration budget of {max_patterns}")

    subproblem = Subproblem(instance, net, bounds, intervals)
    reward_coeffs, reward_const = subproblem.reward
    subproblem.model.set_objective(reward_coeffs, ObjectiveSense.MAXIMIZE, reward_const)
    builder = subproblem.builder
    live = set(bounds.live_units)

    def fixes_for(pattern: Pattern) -> List[Tuple[int, float]]:
        fixes = []
        for unit, level in enumerate(pattern):
            fixes.append((builder.var(VarKind.BIT, unit, 1), 1.0 if level > 0 else 0.0))
            if unit in live:
                fixes.extend((builder.var(VarKind.INTERVAL, unit, 1, i), 1.0 if level == i else 0.0)
                             for i in range(1, intervals + 1))
        return fixes

    patterns = list(enumerate_patterns(bounds, intervals))
    values = Parallel(n_jobs=n_jobs)(
        delayed(_fixed_pattern_reward)(subproblem.model, fixes_for(p)) for p in patterns)
    cuts = [(p, v) for p, v in zip(patterns, values) if v is not None]
    if not cuts:
        raise InfeasibleError("learned planning problem infeasible: every pattern is infeasible")
    logger.info("Enumerated %d patterns, %d feasible", len(patterns), len(cuts))

    value_bound = (len(bounds) + 1) * (reward_magnitude_bound(instance, net, bounds) + 1.0)
    potentials = solve_master(cuts, lam, bounds, intervals, value_bound, epsilon)
    potentials.certified_violation = 0.0
    potentials.structure = net.structure
    return potentials
