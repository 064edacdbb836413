"""
Dense tableau simplex for bounded-variable linear programs.

Variables are shifted onto ``[0, u]`` (free variables are split), rows get
slack and artificial columns, and a two-phase primal simplex runs on a dense
tableau. Nonbasic variables sit at either bound, so finite upper bounds never
become rows. Entering variables follow Dantzig's rule and switch to Bland's
rule after a configurable run of degenerate pivots.
"""

import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Model, ObjectiveSense, Sense, SolveStatus
from ..errors import ModelError, NumericBreakdownError

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

logger = logging.getLogger(__name__)


def _pivot_numpy(T: np.ndarray, row: int, col: int):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


if HAS_NUMBA:
    @njit(cache=False)
    def _pivot_kernel(T, row, col):
        m, n = T.shape
        piv = T[row, col]
        for j in range(n):
            T[row, j] /= piv
        for i in range(m):
            if i != row:
                f = T[i, col]
                if f != 0.0:
                    for j in range(n):
                        T[i, j] -= f * T[row, j]
else:
    _pivot_kernel = _pivot_numpy


def pivot(T: np.ndarray, row: int, col: int):
    """Gauss-Jordan pivot of tableau ``T`` on ``(row, col)``, in place."""
    _pivot_kernel(T, row, col)
    T[:, col] = 0.0
    T[row, col] = 1.0


@dataclass
class LpParams:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    bland_after: int = 1000
    refactor_every: int = 50
    max_iterations: Optional[int] = None

    @classmethod
    def from_config(cls, config=None) -> 'LpParams':
        from ..config_manager import get_config_manager
        config = config or get_config_manager()
        return cls(feas_tol=config.get('solver.feas_tol'),
                   bland_after=config.get('solver.bland_after'),
                   refactor_every=config.get('solver.refactor_every'))


@dataclass
class LpResult:
    status: SolveStatus
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class StandardForm:
    """
    Dense arrays of a linear model, built once and reused across bound changes.
    """

    def __init__(self, model: Model):
        if model.has_quadratic:
            raise ModelError("solve_lp requires a linear objective")
        self.A, self.senses, self.b = model.constraint_matrix()
        self.c_user = model.objective_vector()
        self.sign = -1.0 if model.sense is ObjectiveSense.MAXIMIZE else 1.0
        self.c = self.sign * self.c_user
        self.constant = model.objective_constant
        self.lo = model.lower_bounds()
        self.hi = model.upper_bounds()

    @property
    def shape(self):
        return self.A.shape


class _BoundedSimplex:
    """Tableau state: row 0 holds reduced costs, rows 1..m hold B^-1 A."""

    def __init__(self, A: np.ndarray, b: np.ndarray, u: np.ndarray, basis: np.ndarray,
                 params: LpParams):
        self.A = A
        self.b = b
        self.u = u
        self.m, self.n = A.shape
        self.params = params
        self.basis = basis.astype(int)
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.T = np.zeros((self.m + 1, self.n))
        self.T[1:] = A
        self.beta = b.astype(float).copy()
        self.c = np.zeros(self.n)
        self.iterations = 0
        self.degenerate_run = 0
        self.use_bland = False
        self._since_refactor = 0

    def set_cost(self, c: np.ndarray):
        self.c = c
        self.T[0] = c - c[self.basis] @ self.T[1:]

    def refactor(self):
        if self.m == 0:
            self.T[0] = self.c.copy()
            return
        B = self.A[:, self.basis]
        upper = self.at_upper & ~self.is_basic
        rhs = self.b - self.A[:, upper] @ self.u[upper]
        try:
            self.T[1:] = np.linalg.solve(B, self.A)
            self.beta = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            raise NumericBreakdownError("basis matrix became singular")
        self.T[0] = self.c - self.c[self.basis] @ self.T[1:]
        self._since_refactor = 0

    def _entering(self) -> int:
        d = self.T[0]
        tol = self.params.opt_tol
        nonbasic = ~self.is_basic
        from_lower = nonbasic & ~self.at_upper & (d < -tol) & (self.u > 0.0)
        from_upper = nonbasic & self.at_upper & (d > tol)
        eligible = np.flatnonzero(from_lower | from_upper)
        if eligible.size == 0:
            return -1
        if self.use_bland:
            return int(eligible[0])
        return int(eligible[np.argmax(np.abs(d[eligible]))])

    def _step(self, j: int) -> bool:
        """One iteration on entering column ``j``; False when the ray is unbounded."""
        delta = -1.0 if self.at_upper[j] else 1.0
        alpha = self.T[1:, j]
        a = delta * alpha
        ptol = self.params.pivot_tol

        theta_row = math.inf
        r = -1
        leaving_to_upper = False
        if self.m:
            u_basic = self.u[self.basis]
            ratios = np.full(self.m, math.inf)
            dec = a > ptol
            ratios[dec] = np.maximum(self.beta[dec], 0.0) / a[dec]
            inc = (a < -ptol) & np.isfinite(u_basic)
            ratios[inc] = np.maximum(u_basic[inc] - self.beta[inc], 0.0) / (-a[inc])
            theta_row = float(ratios.min())
            if math.isfinite(theta_row):
                ties = np.flatnonzero(ratios <= theta_row + 1e-12 * max(1.0, theta_row))
                if self.use_bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(a[ties]))])
                leaving_to_upper = bool(inc[r])

        flip = self.u[j]
        if math.isfinite(flip) and flip <= theta_row:
            self.beta -= delta * flip * alpha
            self.at_upper[j] = not self.at_upper[j]
            self.degenerate_run = 0
            return True
        if r < 0:
            return False

        theta = theta_row
        entering_value = (self.u[j] if self.at_upper[j] else 0.0) + delta * theta
        self.beta -= delta * theta * alpha
        self.beta[r] = entering_value
        leaving = self.basis[r]
        self.is_basic[leaving] = False
        self.at_upper[leaving] = leaving_to_upper
        self.basis[r] = j
        self.is_basic[j] = True
        self.at_upper[j] = False
        pivot(self.T, r + 1, j)

        if theta <= 1e-12:
            self.degenerate_run += 1
            if not self.use_bland and self.degenerate_run > self.params.bland_after:
                logger.debug("Switching to Bland's rule after %d degenerate pivots", self.degenerate_run)
                self.use_bland = True
        else:
            self.degenerate_run = 0

        self._since_refactor += 1
        if self._since_refactor >= self.params.refactor_every:
            self.refactor()
        return True

    def run(self, max_iterations: int) -> bool:
        """Iterate to optimality; returns False if the problem is unbounded."""
        while True:
            j = self._entering()
            if j < 0:
                return True
            if self.iterations >= max_iterations:
                raise NumericBreakdownError(f"simplex exceeded {max_iterations} iterations")
            self.iterations += 1
            if not self._step(j):
                return False

    def values(self) -> np.ndarray:
        y = np.where(self.at_upper, self.u, 0.0)
        y[self.basis] = self.beta
        return np.clip(y, 0.0, self.u)

    def drive_out_artificials(self, n_struct: int):
        """Pivot zero-valued artificials out of the basis; drop redundant rows."""
        keep = np.ones(self.m, dtype=bool)
        for r in range(self.m):
            if self.basis[r] < n_struct:
                continue
            row = self.T[r + 1, :n_struct]
            candidates = np.flatnonzero(~self.is_basic[:n_struct] & (np.abs(row) > 1e-7))
            if candidates.size == 0:
                keep[r] = False
                continue
            j = int(candidates[np.argmax(np.abs(row[candidates]))])
            leaving = self.basis[r]
            self.is_basic[leaving] = False
            self.at_upper[leaving] = False
            self.beta[r] = self.u[j] if self.at_upper[j] else 0.0
            self.basis[r] = j
            self.is_basic[j] = True
            self.at_upper[j] = False
            pivot(self.T, r + 1, j)

        rows = np.flatnonzero(keep)
        self.A = self.A[rows][:, :n_struct]
        self.b = self.b[rows]
        self.T = self.T[np.concatenate(([0], rows + 1))][:, :n_struct]
        self.beta = self.beta[rows]
        self.basis = self.basis[rows]
        self.u = self.u[:n_struct]
        self.is_basic = self.is_basic[:n_struct]
        self.at_upper = self.at_upper[:n_struct]
        self.m, self.n = self.A.shape


def solve_standard(form: StandardForm, lo: Optional[np.ndarray] = None, hi: Optional[np.ndarray] = None,
                   params: Optional[LpParams] = None) -> LpResult:
    """
    Solve the LP held by ``form`` with optional replacement variable bounds.
    """
    params = params or LpParams()
    lo = form.lo if lo is None else np.asarray(lo, dtype=float)
    hi = form.hi if hi is None else np.asarray(hi, dtype=float)
    if np.any(lo > hi + params.feas_tol):
        return LpResult(SolveStatus.INFEASIBLE)
    hi = np.maximum(hi, lo)

    A, b, c = form.A, form.b, form.c
    m, n = A.shape

    # x_j = offset_j + sign * y with y in [0, upper]; free variables take two columns
    columns = []
    offset = np.zeros(n)
    for j in range(n):
        if math.isfinite(lo[j]):
            offset[j] = lo[j]
            columns.append((j, 1.0, hi[j] - lo[j]))
        elif math.isfinite(hi[j]):
            offset[j] = hi[j]
            columns.append((j, -1.0, math.inf))
        else:
            columns.append((j, 1.0, math.inf))
            columns.append((j, -1.0, math.inf))
    col_var = np.array([col[0] for col in columns], dtype=int)
    col_sign = np.array([col[1] for col in columns], dtype=float)
    col_upper = [col[2] for col in columns]
    n_y = col_var.size

    Ay = A[:, col_var] * col_sign if m else np.zeros((0, n_y))
    b_shift = b - A @ offset if m else np.zeros(0)
    cy = c[col_var] * col_sign

    slack_rows = [i for i, sense in enumerate(form.senses) if sense is not Sense.EQ]
    S = np.zeros((m, len(slack_rows)))
    for k, i in enumerate(slack_rows):
        S[i, k] = 1.0 if form.senses[i] is Sense.LE else -1.0
    flip = np.where(b_shift < 0.0, -1.0, 1.0)
    structural = np.hstack([Ay, S]) * flip[:, None]
    b_full = b_shift * flip
    n_struct = structural.shape[1]

    basis = np.empty(m, dtype=int)
    art_rows = []
    slack_of_row = {i: n_y + k for k, i in enumerate(slack_rows)}
    for i in range(m):
        s = slack_of_row.get(i)
        if s is not None and structural[i, s] > 0.0:
            basis[i] = s
        else:
            art_rows.append(i)
    art = np.zeros((m, len(art_rows)))
    for k, i in enumerate(art_rows):
        art[i, k] = 1.0
        basis[i] = n_struct + k
    A_full = np.hstack([structural, art])
    u = np.concatenate([np.array(col_upper), np.full(len(slack_rows) + len(art_rows), math.inf)])

    max_iterations = params.max_iterations or (50 * (m + A_full.shape[1]) + 1000)
    simplex = _BoundedSimplex(A_full, b_full, u, basis, params)

    if art_rows:
        phase_one = np.zeros(A_full.shape[1])
        phase_one[n_struct:] = 1.0
        simplex.set_cost(phase_one)
        simplex.run(max_iterations)
        simplex.refactor()
        infeasibility = float(np.sum(simplex.beta[simplex.basis >= n_struct]))
        scale = max(1.0, float(np.max(np.abs(b_full), initial=0.0)))
        if infeasibility > params.feas_tol * scale:
            logger.debug("LP infeasible: phase one residual %.3e", infeasibility)
            return LpResult(SolveStatus.INFEASIBLE, iterations=simplex.iterations)
    simplex.drive_out_artificials(n_struct)

    phase_two = np.concatenate([cy, np.zeros(len(slack_rows))])
    simplex.set_cost(phase_two)
    simplex.refactor()
    if not simplex.run(max_iterations):
        return LpResult(SolveStatus.UNBOUNDED, iterations=simplex.iterations)
    simplex.refactor()

    y = simplex.values()[:n_y]
    x = offset.copy()
    np.add.at(x, col_var, col_sign * y)
    x = np.clip(x, lo, hi)

    violation = _max_row_violation(form, x)
    scale = max(1.0, float(np.max(np.abs(form.b), initial=0.0)))
    if violation > 1e-6 * scale:
        raise NumericBreakdownError(f"simplex returned a point violating constraints by {violation:.3e}")

    objective = float(form.c_user @ x) + form.constant
    return LpResult(SolveStatus.OPTIMAL, x, objective, simplex.iterations)


def _max_row_violation(form: StandardForm, x: np.ndarray) -> float:
    if not form.A.shape[0]:
        return 0.0
    activity = form.A @ x
    worst = 0.0
    for i, sense in enumerate(form.senses):
        if sense is Sense.LE:
            worst = max(worst, activity[i] - form.b[i])
        elif sense is Sense.GE:
            worst = max(worst, form.b[i] - activity[i])
        else:
            worst = max(worst, abs(activity[i] - form.b[i]))
    return worst


def solve_lp(model: Model, params: Optional[LpParams] = None) -> LpResult:
    """
    Solve the linear relaxation of ``model`` (binaries relaxed to their bounds).

    :param model: Model with a linear objective
    :param params: Tolerances and pivoting limits
    :return: LpResult with status, point and objective in the model's sense
    """
    return solve_standard(StandardForm(model), params=params)
