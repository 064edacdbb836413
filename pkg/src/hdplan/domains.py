"""
Synthetic planning domains with hand-built ReLU transition networks.

Navigation, reservoir control and HVAC mimic the usual learned-planning
benchmarks at desk scale; ``random`` draws seeded networks for property tests
and ``relaxation_gap`` is a crafted instance whose big-M relaxation is weak.
Every generated instance is labelled synthetic.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InstanceValidationError
from .milp_core.model import Sense
from .nn_model import NeuralNet, build_network
from .problem import AbsTerm, LinearInequality, PlanningInstance, RewardSpec, VariableDomain

logger = logging.getLogger(__name__)

DOMAIN_KINDS = ('navigation', 'reservoir', 'hvac', 'random', 'relaxation_gap')

DEFAULT_SIZES = {'navigation': 8, 'reservoir': 3, 'hvac': 3, 'random': 0, 'relaxation_gap': 2}
DEFAULT_HORIZONS = {'navigation': 100, 'reservoir': 500, 'hvac': 100, 'random': 4, 'relaxation_gap': 5}

# hidden widths of the wide two-layer variants
PAPER_WIDTHS = {'navigation': 32, 'reservoir': 32, 'hvac': 32}

NAV_SPEED = 0.1
NAV_DRAG = 0.05


@dataclass(frozen=True)
class DomainSpec:
    """
    :param kind: One of DOMAIN_KINDS
    :param size: Maze side, reservoir count, room count or pair count
    :param horizon: Planning horizon H
    :param seed: Seed of every random choice
    :param widths: Layer widths of a random network (e.g. (4, 6, 2))
    :param hidden: Hidden width of the navigation network
    :param paper_widths: Use the wide two-layer networks
    """
    kind: str
    size: Optional[int] = None
    horizon: Optional[int] = None
    seed: int = 0
    widths: Optional[Tuple[int, ...]] = None
    hidden: Optional[int] = None
    paper_widths: bool = False

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise InstanceValidationError(f"unknown domain kind {self.kind!r}; choose from {', '.join(DOMAIN_KINDS)}")
        if self.size is not None and self.size < 1:
            raise InstanceValidationError("domain size must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise InstanceValidationError("horizon must be at least 1")
        if self.kind == 'random':
            if not self.widths or len(self.widths) < 2 or min(self.widths) < 1:
                raise InstanceValidationError("random domains need widths like 4:6:2")
            if self.widths[0] < self.widths[-1]:
                raise InstanceValidationError("random network input width must be at least its output width")

    @property
    def resolved_size(self) -> int:
        return self.size if self.size is not None else DEFAULT_SIZES[self.kind]

    @property
    def resolved_horizon(self) -> int:
        return self.horizon if self.horizon is not None else DEFAULT_HORIZONS[self.kind]

    @property
    def name(self) -> str:
        if self.kind == 'random':
            return f"random_{'-'.join(map(str, self.widths))}_h{self.resolved_horizon}_s{self.seed}"
        return f'{self.kind}_{self.resolved_size}_h{self.resolved_horizon}_s{self.seed}'


def _widen(layers: List[Tuple[np.ndarray, np.ndarray, str]], width: int) -> List[Tuple[np.ndarray, np.ndarray, str]]:
    """
    Pad the hidden layer to ``width`` with inert units and repeat it through an
    identity ReLU layer (hidden outputs are nonnegative, so the map is unchanged).
    """
    (w1, b1, _), (w_out, b_out, _) = layers
    pad = max(width - w1.shape[0], 0)
    w1 = np.vstack([w1, np.zeros((pad, w1.shape[1]))])
    b1 = np.concatenate([b1, -np.ones(pad)])
    w_out = np.hstack([w_out, np.zeros((w_out.shape[0], pad))])
    size = w1.shape[0]
    return [(w1, b1, 'relu'), (np.eye(size), np.zeros(size), 'relu'), (w_out, b_out, 'linear')]


def _box(name: str, count: int, lo: float, hi: float) -> Tuple[VariableDomain, ...]:
    return tuple(VariableDomain(f'{name}{i}', float(lo), float(hi)) for i in range(count))


def _zero_plan_final(net: NeuralNet, initial: np.ndarray, horizon: int, num_actions: int) -> np.ndarray:
    state = initial
    for _ in range(horizon):
        state, _ = net.step(state, np.zeros(num_actions))
    return state


# -- navigation ------------------------------------------------------------

def _navigation(spec: DomainSpec, rng: np.random.Generator):
    side = float(spec.resolved_size)
    horizon = spec.resolved_horizon
    hidden = PAPER_WIDTHS['navigation'] if spec.paper_widths else (spec.hidden or 8)
    if hidden < 8 or hidden % 2:
        raise InstanceValidationError("navigation hidden width must be even and at least 8")
    per_axis = hidden // 2
    ramps = per_axis - 3

    # inputs: x, y, dx, dy
    w1 = np.zeros((hidden, 4))
    b1 = np.zeros(hidden)
    w_out = np.zeros((2, hidden))
    for axis in range(2):
        base = axis * per_axis
        w1[base, axis] = 1.0                # position pass-through
        w1[base + 1, 2 + axis] = 1.0        # forward move
        w1[base + 2, 2 + axis] = -1.0       # backward move
        w_out[axis, base:base + 3] = (1.0, 1.0, -1.0)
        # deceleration zones, jittered by seed
        zones = side * (np.arange(1, ramps + 1) / (ramps + 1)) + rng.uniform(-0.1, 0.1, ramps)
        for r, zone in enumerate(zones):
            unit = base + 3 + r
            w1[unit, axis] = 1.0
            b1[unit] = -float(zone)
            w_out[axis, unit] = -NAV_DRAG
    layers = [(w1, b1, 'relu'), (w_out, np.zeros(2), 'linear')]
    if spec.paper_widths:
        layers = _widen(layers, hidden)
    net = build_network(layers, state_inputs=(0, 1), action_inputs=(2, 3), output_states=(0, 1))

    initial = np.zeros(2)
    target = np.full(2, side)
    final = _zero_plan_final(net, initial, horizon, 2)
    slack = horizon * NAV_DRAG
    goal = tuple((max(0.0, float(f - slack)), min(side, float(f + slack))) for f in final)

    reward = RewardSpec(state_coeffs=(0.0, 0.0), action_coeffs=(0.0, 0.0), constant=0.0,
                        abs_terms=tuple(AbsTerm(1.0, tuple(1.0 if j == i else 0.0 for j in range(2)), (0.0, 0.0),
                                                float(target[i])) for i in range(2)))
    instance = PlanningInstance(
        state_vars=(VariableDomain('x', 0.0, side), VariableDomain('y', 0.0, side)),
        action_vars=(VariableDomain('dx', -NAV_SPEED, NAV_SPEED), VariableDomain('dy', -NAV_SPEED, NAV_SPEED)),
        initial=tuple((float(v), float(v)) for v in initial),
        goal=goal,
        constraints=(),
        reward=reward,
        horizon=horizon,
        name=spec.name,
        metadata={'target': target.tolist(), 'goal_rule': 'zero-action final state +/- horizon * drag'})
    return instance, net


# -- reservoir -------------------------------------------------------------

def _reservoir(spec: DomainSpec, rng: np.random.Generator):
    k = spec.resolved_size
    horizon = spec.resolved_horizon
    capacity, max_release = 100.0, 20.0
    band_lo, band_hi = 0.2 * capacity, 0.8 * capacity
    rain = rng.uniform(2.0, 8.0, k)

    # inputs: levels l_0..l_{k-1}, releases r_0..r_{k-1}; four units per reservoir
    hidden = 4 * k
    w1 = np.zeros((hidden, 2 * k))
    b1 = np.zeros(hidden)
    w_out = np.zeros((k, hidden))
    b_out = np.zeros(k)
    for i in range(k):
        level, release, base = i, k + i, 4 * i
        w1[base, level] = 1.0
        w1[base + 1, release] = 1.0
        w1[base + 2, [level, release]] = (1.0, -1.0)      # spill over capacity
        b1[base + 2] = rain[i] - capacity
        w1[base + 3, [level, release]] = (-1.0, 1.0)      # shortfall below empty
        b1[base + 3] = -rain[i]
        w_out[i, base:base + 4] = (1.0, -1.0, -1.0, 1.0)
        b_out[i] = rain[i]
        if i > 0:
            w_out[i, 4 * (i - 1) + 1] = 1.0                # upstream release
    layers = [(w1, b1, 'relu'), (w_out, b_out, 'linear')]
    if spec.paper_widths:
        layers = _widen(layers, PAPER_WIDTHS['reservoir'])
    net = build_network(layers, state_inputs=range(k), action_inputs=range(k, 2 * k), output_states=range(k))

    half = 0.5
    abs_terms = []
    for i in range(k):
        unit = tuple(1.0 if j == i else 0.0 for j in range(k))
        abs_terms.append(AbsTerm(half, unit, (0.0,) * k, band_lo))
        abs_terms.append(AbsTerm(half, unit, (0.0,) * k, band_hi))
    reward = RewardSpec(state_coeffs=(0.0,) * k, action_coeffs=(-0.01,) * k,
                        constant=k * half * (band_hi - band_lo), abs_terms=tuple(abs_terms))
    constraints = tuple(
        LinearInequality(tuple(-1.0 if j == i else 0.0 for j in range(k)),
                         tuple(1.0 if j == i else 0.0 for j in range(k)), Sense.LE, 0.0, f'release_le_level_{i}')
        for i in range(k))
    instance = PlanningInstance(
        state_vars=_box('level', k, 0.0, capacity),
        action_vars=_box('release', k, 0.0, max_release),
        initial=tuple((0.5 * capacity, 0.5 * capacity) for _ in range(k)),
        goal=tuple((0.0, capacity) for _ in range(k)),
        constraints=constraints,
        reward=reward,
        horizon=horizon,
        name=spec.name,
        metadata={'rain': rain.tolist(), 'band': [band_lo, band_hi]})
    return instance, net


# -- hvac ------------------------------------------------------------------

def _hvac(spec: DomainSpec, rng: np.random.Generator):
    k = spec.resolved_size
    horizon = spec.resolved_horizon
    t_out, loss, coupling = 12.0, 0.1, 0.05
    max_heat, saturation, setpoint, heat_cost = 10.0, 6.0, 21.0, 0.1

    hidden = 3 * k
    w1 = np.zeros((hidden, 2 * k))
    b1 = np.zeros(hidden)
    w_out = np.zeros((k, hidden))
    b_out = np.full(k, loss * t_out)
    for i in range(k):
        temp, heat, base = i, k + i, 3 * i
        neighbours = [j for j in (i - 1, i + 1) if 0 <= j < k]
        w1[base, temp] = 1.0
        w1[base + 1, heat] = 1.0
        w1[base + 2, heat] = 1.0
        b1[base + 2] = -saturation
        w_out[i, base] = 1.0 - loss - coupling * len(neighbours)
        for j in neighbours:
            w_out[i, 3 * j] += coupling
        w_out[i, base + 1] = 1.0
        w_out[i, base + 2] = -1.0
    layers = [(w1, b1, 'relu'), (w_out, b_out, 'linear')]
    if spec.paper_widths:
        layers = _widen(layers, PAPER_WIDTHS['hvac'])
    net = build_network(layers, state_inputs=range(k), action_inputs=range(k, 2 * k), output_states=range(k))

    reward = RewardSpec(
        state_coeffs=(0.0,) * k, action_coeffs=(-heat_cost,) * k, constant=0.0,
        abs_terms=tuple(AbsTerm(1.0, tuple(1.0 if j == i else 0.0 for j in range(k)), (0.0,) * k, setpoint)
                        for i in range(k)))
    budget = 0.6 * k * max_heat
    initial = rng.uniform(10.0, 20.0, k)
    instance = PlanningInstance(
        state_vars=_box('temp', k, 5.0, 35.0),
        action_vars=_box('heat', k, 0.0, max_heat),
        initial=tuple((float(v), float(v)) for v in initial),
        goal=tuple((5.0, 35.0) for _ in range(k)),
        constraints=(LinearInequality((0.0,) * k, (1.0,) * k, Sense.LE, budget, 'heating_budget'),),
        reward=reward,
        horizon=horizon,
        name=spec.name,
        metadata={'outside_temperature': t_out, 'setpoint': setpoint})
    return instance, net


# -- random ----------------------------------------------------------------

def random_network(widths: Sequence[int], rng: np.random.Generator) -> NeuralNet:
    """
    Weights and biases i.i.d. uniform on [-1, 1] divided by the width feeding the
    layer (its fan-in), so first-layer pre-activations stay within [-2, 2] for
    inputs in the unit box. The output layer is halved.
    """
    layers = []
    for index, (fan_in, width) in enumerate(zip(widths[:-1], widths[1:])):
        w = rng.uniform(-1.0, 1.0, (width, fan_in)) / fan_in
        b = rng.uniform(-1.0, 1.0, width) / fan_in
        last = index == len(widths) - 2
        if last:
            w, b = 0.5 * w, 0.5 * b
        layers.append((w, b, 'linear' if last else 'relu'))
    num_states = widths[-1]
    return build_network(layers, state_inputs=range(num_states), action_inputs=range(num_states, widths[0]),
                         output_states=range(num_states))


def _random(spec: DomainSpec, rng: np.random.Generator):
    widths = tuple(spec.widths)
    horizon = spec.resolved_horizon
    net = random_network(widths, rng)
    n_s, n_a = net.num_states, net.num_actions
    bound = float(max(2, len(widths)))

    reward = RewardSpec(
        state_coeffs=tuple(rng.uniform(-1.0, 1.0, n_s).tolist()),
        action_coeffs=tuple(rng.uniform(-1.0, 1.0, n_a).tolist()),
        constant=float(rng.uniform(-1.0, 1.0)),
        abs_terms=(AbsTerm(float(rng.uniform(0.0, 1.0)), tuple(rng.uniform(-1.0, 1.0, n_s).tolist()),
                           (0.0,) * n_a, 0.0),))
    instance = PlanningInstance(
        state_vars=_box('s', n_s, -bound, bound),
        action_vars=_box('a', n_a, -1.0, 1.0),
        initial=tuple((0.0, 0.0) for _ in range(n_s)),
        goal=tuple((-bound, bound) for _ in range(n_s)),
        constraints=(),
        reward=reward,
        horizon=horizon,
        name=spec.name)
    return instance, net


# -- crafted ---------------------------------------------------------------

def _relaxation_gap(spec: DomainSpec, rng: np.random.Generator):
    """
    Pairs of identical units ``relu(a_k)`` whose difference is the next state.
    The true reward is always 0; the big-M relaxation lets each pair report 0.5.
    """
    pairs = spec.resolved_size
    horizon = spec.resolved_horizon
    w1 = np.zeros((2 * pairs, 2 * pairs))
    w_out = np.zeros((pairs, 2 * pairs))
    for k in range(pairs):
        w1[2 * k, pairs + k] = 1.0
        w1[2 * k + 1, pairs + k] = 1.0
        w_out[k, 2 * k:2 * k + 2] = (1.0, -1.0)
    net = build_network([(w1, np.zeros(2 * pairs), 'relu'), (w_out, np.zeros(pairs), 'linear')],
                        state_inputs=range(pairs), action_inputs=range(pairs, 2 * pairs),
                        output_states=range(pairs))
    instance = PlanningInstance(
        state_vars=_box('s', pairs, -1.0, 1.0),
        action_vars=_box('a', pairs, -1.0, 1.0),
        initial=tuple((0.0, 0.0) for _ in range(pairs)),
        goal=tuple((-1.0, 1.0) for _ in range(pairs)),
        constraints=(),
        reward=RewardSpec(state_coeffs=(1.0,) * pairs, action_coeffs=(0.0,) * pairs),
        horizon=horizon,
        name=spec.name)
    return instance, net


_GENERATORS = {
    'navigation': _navigation,
    'reservoir': _reservoir,
    'hvac': _hvac,
    'random': _random,
    'relaxation_gap': _relaxation_gap,
}


def generate(spec: DomainSpec) -> Tuple[PlanningInstance, NeuralNet]:
    """
    Deterministic instance and network for ``spec``.

    :param spec: Domain kind, sizes, horizon and seed
    :return: (PlanningInstance, NeuralNet)
    """
    rng = np.random.default_rng(spec.seed)
    instance, net = _GENERATORS[spec.kind](spec, rng)
    metadata: Dict = dict(instance.metadata)
    metadata.update({'synthetic': True, 'domain': spec.kind, 'seed': spec.seed, 'size': spec.resolved_size,
                     'paper_widths': spec.paper_widths})
    instance = replace(instance, metadata=metadata)
    logger.debug("Generated %s with network %s", instance.name, net.structure)
    return instance, net
