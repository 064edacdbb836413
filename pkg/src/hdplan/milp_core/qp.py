"""
Primal active-set method for convex QPs with a diagonal Hessian.

Solves ``min c.x + sum(q_v x_v^2) + const`` over linear constraints and box
bounds. A feasible vertex from the simplex seeds the working set. Each
iteration works in the null space of the working rows: a Newton step on the
curved part of the reduced Hessian, or a ray along a flat direction when
some q_v = 0 leaves the reduced objective linear.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import null_space

from .model import Model, ObjectiveSense, Sense, SolveStatus
from .simplex import LpParams, solve_lp
from ..errors import InfeasibleError, NonConvexError, NumericBreakdownError, UnboundedError

logger = logging.getLogger(__name__)

KKT_TOL = 1e-8


@dataclass
class QpResult:
    status: SolveStatus
    x: np.ndarray
    objective: float
    iterations: int = 0
    kkt_residual: float = 0.0
    multipliers: Dict[int, float] = field(default_factory=dict)


class ActiveSetSolver:
    """
    Active-set solver over ``G x <= h`` (inequalities) and ``E x = e`` (equalities).

    :param model: Minimization model with diagonal quadratic terms q_v >= 0
    :param tol: Stationarity and feasibility tolerance
    :param kkt_tol: Largest KKT residual accepted as optimal
    """

    def __init__(self, model: Model, tol: float = 1e-10, max_iterations: Optional[int] = None,
                 kkt_tol: float = KKT_TOL):
        self.model = model
        self.tol = tol
        self.kkt_tol = kkt_tol
        n = model.num_variables
        self.n = n

        q = model.quadratic_vector()
        c = model.objective_vector()
        if model.sense is ObjectiveSense.MAXIMIZE:
            q, c = -q, -c
        if np.any(q < 0):
            raise NonConvexError("quadratic coefficients must be nonnegative under minimization")
        self.H = np.diag(2.0 * q)
        self.c = c

        ineq_rows, ineq_rhs, eq_rows, eq_rhs = [], [], [], []
        A, senses, b = model.constraint_matrix()
        for i, sense in enumerate(senses):
            if sense is Sense.LE:
                ineq_rows.append(A[i])
                ineq_rhs.append(b[i])
            elif sense is Sense.GE:
                ineq_rows.append(-A[i])
                ineq_rhs.append(-b[i])
            else:
                eq_rows.append(A[i])
                eq_rhs.append(b[i])
        for var in model.variables:
            unit = np.zeros(n)
            if np.isfinite(var.lo):
                unit[var.id] = -1.0
                ineq_rows.append(unit.copy())
                ineq_rhs.append(-var.lo)
                unit[var.id] = 0.0
            if np.isfinite(var.hi):
                unit[var.id] = 1.0
                ineq_rows.append(unit)
                ineq_rhs.append(var.hi)

        self.G = np.array(ineq_rows).reshape(-1, n)
        self.h = np.array(ineq_rhs, dtype=float)
        self.E = np.array(eq_rows).reshape(-1, n)
        self.e = np.array(eq_rhs, dtype=float)
        self.max_iterations = max_iterations or 50 * (n + len(self.h)) + 100

    def _starting_point(self) -> np.ndarray:
        phase_one = self.model.copy()
        phase_one.set_objective({}, ObjectiveSense.MINIMIZE)
        result = solve_lp(phase_one, LpParams())
        if not result.is_optimal:
            raise InfeasibleError("quadratic program has no feasible point")
        return result.x

    def _independent(self, rows: List[np.ndarray], candidate: np.ndarray) -> bool:
        if not rows:
            return bool(np.linalg.norm(candidate) > 1e-12)
        stacked = np.vstack(rows + [candidate])
        return np.linalg.matrix_rank(stacked, tol=1e-9) == len(rows) + 1

    def _working_rows(self, working: List[int]) -> np.ndarray:
        rows = [self.E[i] for i in range(len(self.e))] + [self.G[i] for i in working]
        return np.vstack(rows) if rows else np.zeros((0, self.n))

    def _direction(self, x: np.ndarray, gradient: np.ndarray, working: List[int]) -> Tuple[Optional[np.ndarray], bool]:
        """Search direction in the working null space; ``(None, False)`` when stationary there."""
        W = self._working_rows(working)
        Z = null_space(W, rcond=1e-10) if W.shape[0] else np.eye(self.n)
        if Z.shape[1] == 0:
            return None, False
        scale = 1.0 + np.max(np.abs(gradient), initial=0.0)
        reduced_g = Z.T @ gradient
        if np.max(np.abs(reduced_g)) <= 1e-12 * scale:
            return None, False

        curvature, V = np.linalg.eigh(Z.T @ self.H @ Z)
        flat = curvature <= 1e-10 * max(1.0, float(curvature.max()))
        flat_g = V[:, flat].T @ reduced_g
        if np.max(np.abs(flat_g), initial=0.0) > 1e-12 * scale:
            # zero curvature with descent: the objective falls linearly along the ray
            return Z @ (-V[:, flat] @ flat_g), True

        curved = ~flat
        p = Z @ (-V[:, curved] @ ((V[:, curved].T @ reduced_g) / curvature[curved]))
        if np.max(np.abs(p)) <= 1e-12 * (1.0 + np.max(np.abs(x), initial=0.0)):
            return None, False
        return p, False

    def _multipliers(self, gradient: np.ndarray, working: List[int]) -> np.ndarray:
        W = self._working_rows(working)
        if W.shape[0] == 0:
            return np.zeros(0)
        mu, *_ = np.linalg.lstsq(W.T, -gradient, rcond=None)
        return mu

    def solve(self) -> QpResult:
        x = self._starting_point()
        n_eq = len(self.e)

        working: List[int] = []
        basis_rows = [self.E[i] for i in range(n_eq)]
        slack = self.h - self.G @ x
        for i in np.flatnonzero(np.abs(slack) <= 1e-9):
            if len(basis_rows) >= self.n:
                break
            if self._independent(basis_rows, self.G[i]):
                working.append(int(i))
                basis_rows.append(self.G[i])

        for iteration in range(1, self.max_iterations + 1):
            gradient = self.H @ x + self.c
            p, ray = self._direction(x, gradient, working)
            if p is None:
                mu = self._multipliers(gradient, working)
                ineq_mu = mu[n_eq:]
                if ineq_mu.size == 0 or ineq_mu.min() >= -self.tol:
                    return self._result(x, working, mu, iteration)
                drop = int(np.argmin(ineq_mu))
                logger.debug("Dropping constraint %d from working set", working[drop])
                working.pop(drop)
                continue

            step = np.inf if ray else 1.0
            blocking = -1
            Gp = self.G @ p
            for i in range(len(self.h)):
                if i in working or Gp[i] <= 1e-12:
                    continue
                ratio = max(self.h[i] - self.G[i] @ x, 0.0) / Gp[i]
                if ratio < step:
                    step, blocking = ratio, i
            if not np.isfinite(step):
                raise UnboundedError("quadratic program is unbounded below")
            x = x + step * p
            if blocking >= 0:
                working.append(blocking)

        raise NumericBreakdownError(f"active-set method exceeded {self.max_iterations} iterations")

    def _result(self, x: np.ndarray, working: List[int], mu: np.ndarray, iterations: int) -> QpResult:
        n_eq = len(self.e)
        W = self._working_rows(working)
        residual_vec = self.H @ x + self.c + W.T @ mu
        residual = float(np.max(np.abs(residual_vec), initial=0.0))
        if residual > self.kkt_tol:
            raise NumericBreakdownError(f"active-set method stopped with KKT residual {residual:.3e}")
        multipliers = {i: float(m) for i, m in zip(working, mu[n_eq:])}
        objective = self.model.objective_value(x)
        return QpResult(SolveStatus.OPTIMAL, x, objective, iterations, residual, multipliers)


def solve_qp(model: Model) -> QpResult:
    """
    Minimize a convex diagonal QP; a model without quadratic terms goes to the simplex.

    :param model: Model with q_v >= 0 under minimization
    :return: QpResult with the optimal point and KKT residual
    """
    if model.sense is ObjectiveSense.MINIMIZE and any(v < 0 for v in model.quadratic.values()):
        raise NonConvexError("quadratic coefficients must be nonnegative under minimization")
    if model.sense is ObjectiveSense.MAXIMIZE and any(v > 0 for v in model.quadratic.values()):
        raise NonConvexError("maximizing a convex quadratic is not supported")
    if not model.has_quadratic:
        result = solve_lp(model)
        if result.status is SolveStatus.INFEASIBLE:
            raise InfeasibleError("quadratic program has no feasible point")
        if result.status is SolveStatus.UNBOUNDED:
            raise UnboundedError("linear program is unbounded")
        return QpResult(result.status, result.x, result.objective, result.iterations)
    return ActiveSetSolver(model).solve()
