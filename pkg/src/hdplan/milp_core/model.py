"""
Optimization model shared by the LP, MILP and QP solvers.

A :class:`Model` holds continuous and binary variables with box bounds,
sparse linear constraints and a linear objective with optional diagonal
quadratic terms. Variables are addressed by integer id; names are unique.
"""

import copy
import math
import json
from enum import Enum
from dataclasses import dataclass, field, asdict
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import ModelError, SolverStatusError

INF = math.inf

Coefficients = Union[Mapping[int, float], Iterable[Tuple[int, float]]]


class VarType(str, Enum):
    CONTINUOUS = 'continuous'
    BINARY = 'binary'


class Sense(str, Enum):
    LE = '<='
    EQ = '='
    GE = '>='

    @classmethod
    def parse(cls, value: Union[str, 'Sense']) -> 'Sense':
        if isinstance(value, Sense):
            return value
        aliases = {'<=': cls.LE, '=<': cls.LE, '<': cls.LE,
                   '>=': cls.GE, '=>': cls.GE, '>': cls.GE,
                   '=': cls.EQ, '==': cls.EQ}
        try:
            return aliases[str(value).strip()]
        except KeyError:
            raise ModelError(f"Unknown constraint sense: {value!r}")


class ObjectiveSense(str, Enum):
    MINIMIZE = 'min'
    MAXIMIZE = 'max'


class SolveStatus(str, Enum):
    OPTIMAL = 'optimal'
    FEASIBLE = 'feasible'
    INFEASIBLE = 'infeasible'
    UNBOUNDED = 'unbounded'
    LIMIT = 'limit'


@dataclass
class Variable:
    id: int
    name: str
    kind: VarType
    lo: float
    hi: float


@dataclass
class Constraint:
    coeffs: Dict[int, float]
    sense: Sense
    rhs: float
    name: str


class Model:
    """
    Builder for LP/MILP/diagonal-QP models.

    :param name: Model name used by the LP-format writer
    """

    def __init__(self, name: str = 'model'):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.sense = ObjectiveSense.MINIMIZE
        self.objective: Dict[int, float] = {}
        self.quadratic: Dict[int, float] = {}
        self.objective_constant = 0.0
        self._names: Dict[str, int] = {}
        self._constraint_names: Dict[str, int] = {}

    # -- variables ---------------------------------------------------------

    def add_variable(self, name: Optional[str] = None, lo: float = 0.0, hi: float = INF,
                     kind: VarType = VarType.CONTINUOUS) -> int:
        """
        Declare a variable and return its id.

        :param name: Unique name, defaults to ``x{id}``
        :param lo: Lower bound (may be -inf for continuous variables)
        :param hi: Upper bound (may be +inf for continuous variables)
        :param kind: Continuous or binary
        :return: Variable id
        """
        kind = VarType(kind)
        var_id = len(self.variables)
        name = name if name is not None else f'x{var_id}'
        if name in self._names:
            raise ModelError(f"Duplicate variable name: {name}")
        lo, hi = float(lo), float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ModelError(f"Variable {name} has a NaN bound")
        if kind is VarType.BINARY and (lo < 0.0 or hi > 1.0):
            raise ModelError(f"Binary variable {name} must have bounds within [0, 1]")
        if lo > hi:
            raise ModelError(f"Variable {name} has lo > hi ({lo} > {hi})")
        self.variables.append(Variable(var_id, name, kind, lo, hi))
        self._names[name] = var_id
        return var_id

    def add_binary(self, name: Optional[str] = None, lo: float = 0.0, hi: float = 1.0) -> int:
        return self.add_variable(name, lo, hi, VarType.BINARY)

    def set_bounds(self, var_id: int, lo: Optional[float] = None, hi: Optional[float] = None):
        var = self.variables[var_id]
        new_lo = var.lo if lo is None else float(lo)
        new_hi = var.hi if hi is None else float(hi)
        if new_lo > new_hi:
            raise ModelError(f"Variable {var.name} would have lo > hi")
        if var.kind is VarType.BINARY and (new_lo < 0.0 or new_hi > 1.0):
            raise ModelError(f"Binary variable {var.name} must have bounds within [0, 1]")
        var.lo, var.hi = new_lo, new_hi

    def has_variable(self, name: str) -> bool:
        return name in self._names

    def variable_id(self, name: str) -> int:
        try:
            return self._names[name]
        except KeyError:
            raise ModelError(f"Unknown variable: {name}")

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def binary_ids(self) -> List[int]:
        return [v.id for v in self.variables if v.kind is VarType.BINARY]

    @property
    def num_binaries(self) -> int:
        return len(self.binary_ids())

    def lower_bounds(self) -> np.ndarray:
        return np.array([v.lo for v in self.variables], dtype=float)

    def upper_bounds(self) -> np.ndarray:
        return np.array([v.hi for v in self.variables], dtype=float)

    # -- constraints and objective -----------------------------------------

    def _clean_coefficients(self, coeffs: Coefficients, context: str) -> Dict[int, float]:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        cleaned: Dict[int, float] = {}
        for var_id, value in items:
            var_id = int(var_id)
            if not 0 <= var_id < len(self.variables):
                raise ModelError(f"{context} references undeclared variable id {var_id}")
            value = float(value)
            if not math.isfinite(value):
                raise ModelError(f"{context} has a non-finite coefficient on {self.variables[var_id].name}")
            cleaned[var_id] = cleaned.get(var_id, 0.0) + value
        return {k: v for k, v in cleaned.items() if v != 0.0}

    def add_constraint(self, coeffs: Coefficients, sense: Union[str, Sense], rhs: float,
                       name: Optional[str] = None) -> int:
        """
        Add ``sum(coeffs[j] * x_j) <sense> rhs`` and return the constraint index.
        """
        index = len(self.constraints)
        name = name if name is not None else f'c{index}'
        if name in self._constraint_names:
            raise ModelError(f"Duplicate constraint name: {name}")
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ModelError(f"Constraint {name} has a non-finite right-hand side")
        cleaned = self._clean_coefficients(coeffs, f"Constraint {name}")
        self.constraints.append(Constraint(cleaned, Sense.parse(sense), rhs, name))
        self._constraint_names[name] = index
        return index

    def constraint(self, name: str) -> Constraint:
        return self.constraints[self._constraint_names[name]]

    def set_objective(self, coeffs: Coefficients, sense: Union[str, ObjectiveSense] = ObjectiveSense.MINIMIZE,
                      constant: float = 0.0, quadratic: Optional[Coefficients] = None):
        """
        Set the objective ``constant + c.x + sum(q_v * x_v^2)``.
        """
        self.sense = ObjectiveSense(sense)
        self.objective = self._clean_coefficients(coeffs, "Objective")
        self.quadratic = self._clean_coefficients(quadratic or {}, "Quadratic objective")
        self.objective_constant = float(constant)

    @property
    def has_quadratic(self) -> bool:
        return bool(self.quadratic)

    # -- dense views -------------------------------------------------------

    def constraint_matrix(self) -> Tuple[np.ndarray, List[Sense], np.ndarray]:
        A = np.zeros((len(self.constraints), len(self.variables)))
        for i, con in enumerate(self.constraints):
            for j, value in con.coeffs.items():
                A[i, j] = value
        senses = [con.sense for con in self.constraints]
        rhs = np.array([con.rhs for con in self.constraints], dtype=float)
        return A, senses, rhs

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(len(self.variables))
        for j, value in self.objective.items():
            c[j] = value
        return c

    def quadratic_vector(self) -> np.ndarray:
        q = np.zeros(len(self.variables))
        for j, value in self.quadratic.items():
            q[j] = value
        return q

    def objective_value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        value = self.objective_constant + float(self.objective_vector() @ x)
        if self.quadratic:
            value += float(self.quadratic_vector() @ (x * x))
        return value

    def max_violation(self, x: np.ndarray, check_integrality: bool = False) -> float:
        """
        Largest bound or constraint violation at ``x`` (0 when feasible).
        """
        x = np.asarray(x, dtype=float)
        worst = 0.0
        lo, hi = self.lower_bounds(), self.upper_bounds()
        if len(x):
            worst = max(worst, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
        for con in self.constraints:
            activity = sum(value * x[j] for j, value in con.coeffs.items())
            if con.sense is Sense.LE:
                worst = max(worst, activity - con.rhs)
            elif con.sense is Sense.GE:
                worst = max(worst, con.rhs - activity)
            else:
                worst = max(worst, abs(activity - con.rhs))
        if check_integrality:
            for j in self.binary_ids():
                worst = max(worst, abs(x[j] - round(x[j])))
        return worst

    # -- copies ------------------------------------------------------------

    def copy(self) -> 'Model':
        return copy.deepcopy(self)

    def relaxed(self) -> 'Model':
        """Copy with every binary variable relaxed to a continuous one on its bounds."""
        clone = self.copy()
        for var in clone.variables:
            var.kind = VarType.CONTINUOUS
        return clone

    def __repr__(self) -> str:
        return (f"Model(name={self.name!r}, variables={self.num_variables}, "
                f"binaries={self.num_binaries}, constraints={self.num_constraints})")


@dataclass
class TimelineSample:
    t: float
    dual: Optional[float]
    primal: Optional[float]
    open: int
    closed: int


@dataclass
class SolveStats:
    """
    Branch-and-bound telemetry: incumbent, bound, node counts and their timeline.
    """
    sense: ObjectiveSense = ObjectiveSense.MAXIMIZE
    status: SolveStatus = SolveStatus.INFEASIBLE
    primal: Optional[float] = None
    dual: Optional[float] = None
    nodes_open: int = 0
    nodes_closed: int = 0
    elapsed: float = 0.0
    timeline: List[TimelineSample] = field(default_factory=list)

    def record(self, elapsed: float):
        self.timeline.append(TimelineSample(elapsed, self.dual, self.primal,
                                            self.nodes_open, self.nodes_closed))

    def validate(self, tol: float = 1e-6):
        """
        Check the bound and node-count invariants; raises on violation.
        """
        direction = 1.0 if self.sense is ObjectiveSense.MAXIMIZE else -1.0
        if self.primal is not None and self.dual is not None:
            slack = tol * max(1.0, abs(self.primal))
            if direction * (self.dual - self.primal) < -slack:
                raise SolverStatusError(
                    f"dual bound {self.dual} is on the wrong side of primal {self.primal}",
                    self.status.value)
        previous: Optional[TimelineSample] = None
        for sample in self.timeline:
            if previous is not None:
                if sample.closed < previous.closed:
                    raise SolverStatusError("closed node count decreased in timeline", self.status.value)
                if sample.dual is not None and previous.dual is not None:
                    if direction * (sample.dual - previous.dual) > tol * max(1.0, abs(previous.dual)):
                        raise SolverStatusError("dual bound worsened in timeline", self.status.value)
            previous = sample

    @property
    def gap(self) -> Optional[float]:
        if self.primal is None or self.dual is None:
            return None
        return abs(self.dual - self.primal) / max(1.0, abs(self.primal))

    def to_dict(self) -> dict:
        return {
            'status': self.status.value,
            'sense': self.sense.value,
            'primal': self.primal,
            'dual': self.dual,
            'nodes_open': self.nodes_open,
            'nodes_closed': self.nodes_closed,
            'elapsed': self.elapsed,
            'timeline': [asdict(sample) for sample in self.timeline],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def timeline_frame(self) -> pd.DataFrame:
        columns = ['t', 'dual', 'primal', 'open', 'closed']
        return pd.DataFrame([asdict(sample) for sample in self.timeline], columns=columns)

    def write_timeline_csv(self, path: str):
        self.timeline_frame().to_csv(path, index=False)
