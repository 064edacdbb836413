"""
Factored planning instances over a learned transition network.

Holds the variable domains, initial and goal conditions, global constraints,
the concave piecewise-linear reward and the horizon, and evaluates plans by
chaining the network forward.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, InstanceValidationError, MissingInitialValueError
from .milp_core.model import Sense
from .nn_model import ActivationRecord, NeuralNet

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]


def _vector(values: Sequence[float], length: int, what: str) -> np.ndarray:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.shape != (length,):
        raise DimensionMismatchError(f"{what} has length {array.size}, expected {length}")
    return array


@dataclass(frozen=True)
class VariableDomain:
    name: str
    lo: float
    hi: float

    def violation(self, value: float) -> float:
        return max(self.lo - value, value - self.hi, 0.0)


@dataclass(frozen=True)
class LinearInequality:
    """``state_coeffs . s + action_coeffs . a <sense> rhs`` on the current step."""
    state_coeffs: Tuple[float, ...]
    action_coeffs: Tuple[float, ...]
    sense: Sense
    rhs: float
    name: Optional[str] = None

    def lhs(self, state: np.ndarray, action: np.ndarray) -> float:
        return float(np.dot(self.state_coeffs, state) + np.dot(self.action_coeffs, action))

    def violation(self, state: np.ndarray, action: np.ndarray) -> float:
        value = self.lhs(state, action)
        if self.sense is Sense.LE:
            return max(value - self.rhs, 0.0)
        if self.sense is Sense.GE:
            return max(self.rhs - value, 0.0)
        return abs(value - self.rhs)


@dataclass(frozen=True)
class AbsTerm:
    """Concave reward piece ``-weight * |state_coeffs . s' + action_coeffs . a - target|``."""
    weight: float
    state_coeffs: Tuple[float, ...]
    action_coeffs: Tuple[float, ...]
    target: float = 0.0

    def inner(self, next_state: np.ndarray, action: np.ndarray) -> float:
        return float(np.dot(self.state_coeffs, next_state) + np.dot(self.action_coeffs, action)) - self.target

    def value(self, next_state: np.ndarray, action: np.ndarray) -> float:
        return -self.weight * abs(self.inner(next_state, action))


@dataclass(frozen=True)
class RewardSpec:
    state_coeffs: Tuple[float, ...]
    action_coeffs: Tuple[float, ...]
    constant: float = 0.0
    abs_terms: Tuple[AbsTerm, ...] = ()

    def __post_init__(self):
        for k, term in enumerate(self.abs_terms):
            if not term.weight >= 0.0:
                raise InstanceValidationError(f"reward term {k} has negative weight {term.weight}")
            if len(term.state_coeffs) != len(self.state_coeffs) or len(term.action_coeffs) != len(self.action_coeffs):
                raise DimensionMismatchError(f"reward term {k} has inconsistent coefficient lengths")

    @property
    def num_states(self) -> int:
        return len(self.state_coeffs)

    @property
    def num_actions(self) -> int:
        return len(self.action_coeffs)


def evaluate_reward(spec: RewardSpec, next_state: Sequence[float], action: Sequence[float]) -> float:
    """
    Evaluate the affine part plus the absolute-deviation penalties.

    :param spec: Reward definition
    :param next_state: State values after the transition
    :param action: Action values of the step
    :return: One-step reward
    """
    next_state = _vector(next_state, spec.num_states, "next_state")
    action = _vector(action, spec.num_actions, "action")
    value = spec.constant + float(np.dot(spec.state_coeffs, next_state) + np.dot(spec.action_coeffs, action))
    for term in spec.abs_terms:
        value += term.value(next_state, action)
    return value


@dataclass(frozen=True)
class PlanningInstance:
    """
    Deterministic factored planning problem with a horizon of H steps.

    ``initial`` and ``goal`` hold one interval per state variable; a fixed
    initial value is the degenerate interval ``(v, v)``.
    """
    state_vars: Tuple[VariableDomain, ...]
    action_vars: Tuple[VariableDomain, ...]
    initial: Tuple[Interval, ...]
    goal: Tuple[Interval, ...]
    constraints: Tuple[LinearInequality, ...]
    reward: RewardSpec
    horizon: int
    name: str = 'instance'
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for var in self.state_vars + self.action_vars:
            if not (np.isfinite(var.lo) and np.isfinite(var.hi)):
                raise InstanceValidationError(f"domain of {var.name} must be finite")
            if var.lo > var.hi:
                raise InstanceValidationError(f"domain of {var.name} has lo > hi")
        names = [var.name for var in self.state_vars + self.action_vars]
        if len(set(names)) != len(names):
            raise InstanceValidationError("variable names must be unique")
        if self.horizon < 0:
            raise InstanceValidationError("horizon must be nonnegative")

        n_s, n_a = self.num_states, self.num_actions
        if len(self.initial) != n_s or len(self.goal) != n_s:
            raise DimensionMismatchError("initial and goal need one entry per state variable")
        for var, (lo, hi), (g_lo, g_hi) in zip(self.state_vars, self.initial, self.goal):
            if lo > hi or lo < var.lo or hi > var.hi:
                raise InstanceValidationError(f"initial value of {var.name} lies outside its domain")
            if g_lo > g_hi or g_hi < var.lo or g_lo > var.hi:
                raise InstanceValidationError(f"goal interval of {var.name} misses its domain")
        for k, con in enumerate(self.constraints):
            if len(con.state_coeffs) != n_s or len(con.action_coeffs) != n_a:
                raise DimensionMismatchError(f"global constraint {k} references undeclared variables")
        if self.reward.num_states != n_s or self.reward.num_actions != n_a:
            raise DimensionMismatchError("reward coefficients do not match the declared variables")

    @property
    def num_states(self) -> int:
        return len(self.state_vars)

    @property
    def num_actions(self) -> int:
        return len(self.action_vars)

    def state_box(self) -> np.ndarray:
        return np.array([[v.lo, v.hi] for v in self.state_vars], dtype=float).reshape(-1, 2)

    def action_box(self) -> np.ndarray:
        return np.array([[v.lo, v.hi] for v in self.action_vars], dtype=float).reshape(-1, 2)

    def input_box(self, net: NeuralNet) -> np.ndarray:
        """Domain box in the network's input slot order."""
        self.check_network(net)
        box = np.empty((net.input_width, 2))
        box[list(net.state_inputs)] = self.state_box()
        box[list(net.action_inputs)] = self.action_box()
        return box

    def check_network(self, net: NeuralNet):
        if net.num_states != self.num_states or net.num_actions != self.num_actions:
            raise DimensionMismatchError(
                f"network has {net.num_states} state and {net.num_actions} action inputs, instance declares "
                f"{self.num_states} and {self.num_actions}", layer=0)

    @property
    def has_fixed_initial(self) -> bool:
        return all(lo == hi for lo, hi in self.initial)

    def initial_state(self) -> np.ndarray:
        if not self.has_fixed_initial:
            missing = [v.name for v, (lo, hi) in zip(self.state_vars, self.initial) if lo != hi]
            raise MissingInitialValueError(f"initial value not fixed for {', '.join(missing)}")
        return np.array([lo for lo, _ in self.initial], dtype=float)


@dataclass
class Plan:
    actions: np.ndarray
    states: Optional[np.ndarray] = None
    objective: Optional[float] = None

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=float)
        if self.actions.ndim == 1 and self.actions.size == 0:
            self.actions = self.actions.reshape(0, 0)
        if self.states is not None:
            self.states = np.asarray(self.states, dtype=float)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {'actions': self.actions.tolist()}
        if self.states is not None:
            document['states'] = self.states.tolist()
        if self.objective is not None:
            document['objective'] = self.objective
        return document

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> 'Plan':
        return cls(np.asarray(document['actions'], dtype=float),
                   None if document.get('states') is None else np.asarray(document['states'], dtype=float),
                   document.get('objective'))


@dataclass
class Trajectory:
    states: np.ndarray
    rewards: np.ndarray
    patterns: List[ActivationRecord]

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards.tolist()))


@dataclass(frozen=True)
class Violation:
    kind: str
    step: int
    index: int
    magnitude: float


@dataclass
class PlanReport:
    violations: List[Violation]
    tol: float
    total_reward: Optional[float] = None

    @property
    def valid(self) -> bool:
        return all(v.magnitude <= self.tol for v in self.violations)

    @property
    def max_violation(self) -> float:
        return max((v.magnitude for v in self.violations), default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'valid': self.valid,
            'tol': self.tol,
            'max_violation': self.max_violation,
            'violations': [vars(v) for v in self.violations],
        }


def _plan_actions(instance: PlanningInstance, plan: Plan) -> np.ndarray:
    actions = plan.actions.reshape(plan.horizon, -1) if plan.horizon else np.zeros((0, instance.num_actions))
    if actions.shape != (instance.horizon, instance.num_actions):
        raise DimensionMismatchError(
            f"plan has shape {actions.shape}, expected ({instance.horizon}, {instance.num_actions})")
    return actions


def simulate(instance: PlanningInstance, net: NeuralNet, plan: Plan) -> Trajectory:
    """
    Chain the network over the plan from the fixed initial state.

    :return: Trajectory with H+1 states, H rewards and H activation records
    """
    instance.check_network(net)
    state = instance.initial_state()
    actions = _plan_actions(instance, plan)

    states = [state]
    rewards = []
    patterns = []
    for action in actions:
        state, record = net.step(state, action)
        states.append(state)
        rewards.append(evaluate_reward(instance.reward, state, action))
        patterns.append(record)
    return Trajectory(np.vstack(states), np.array(rewards, dtype=float), patterns)


def check_plan(instance: PlanningInstance, net: NeuralNet, plan: Plan, tol: float = 1e-6) -> PlanReport:
    """
    Report every domain, global-constraint, goal and dynamics violation of ``plan``.

    Steps are numbered 1..H for actions and 1..H+1 for states. Violations are
    returned as data; the plan is valid iff each magnitude is within ``tol``.
    """
    trajectory = simulate(instance, net, plan)
    actions = _plan_actions(instance, plan)
    states = trajectory.states
    violations: List[Violation] = []

    def note(kind: str, step: int, index: int, magnitude: float):
        if magnitude > 0.0:
            violations.append(Violation(kind, step, index, float(magnitude)))

    # Claimed states must match the simulated dynamics
    if plan.states is not None:
        claimed = np.asarray(plan.states, dtype=float)
        if claimed.shape != states.shape:
            raise DimensionMismatchError(f"plan states have shape {claimed.shape}, expected {states.shape}")
        for t, (ours, theirs) in enumerate(zip(states, claimed), start=1):
            for i, gap in enumerate(np.abs(ours - theirs)):
                note('dynamics', t, i, gap)

    for t, action in enumerate(actions, start=1):
        for i, var in enumerate(instance.action_vars):
            note('action_domain', t, i, var.violation(action[i]))
        for k, con in enumerate(instance.constraints):
            note('global_constraint', t, k, con.violation(states[t - 1], action))

    for t, state in enumerate(states, start=1):
        for i, var in enumerate(instance.state_vars):
            note('state_domain', t, i, var.violation(state[i]))

    final = states[-1]
    for i, (lo, hi) in enumerate(instance.goal):
        note('goal', instance.horizon + 1, i, max(lo - final[i], final[i] - hi, 0.0))

    report = PlanReport(violations, tol, trajectory.total_reward)
    if not report.valid:
        logger.debug("Plan check found %d violations (max %.3g)", len(violations), report.max_violation)
    return report
