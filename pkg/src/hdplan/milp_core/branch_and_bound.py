"""
Best-bound branch-and-bound over binary variables.

Node selection takes the open node with the best parent bound; ties go to
the deepest node, then the most recently created one. Branching picks the
most fractional binary, ties broken by the lowest variable id. There is no
presolve and there are no cuts.
"""

import heapq
import time
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .model import Model, ObjectiveSense, SolveStats, SolveStatus
from .simplex import LpParams, StandardForm, solve_standard
from ..errors import ModelError


@dataclass
class MilpParams:
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None
    gap_tol: float = 1e-6
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    bland_after: int = 1000
    refactor_every: int = 50

    @classmethod
    def from_config(cls, config=None, **overrides) -> 'MilpParams':
        from ..config_manager import get_config_manager
        config = config or get_config_manager()
        params = cls(time_limit=config.get('solver.time_limit'),
                     node_limit=config.get('solver.node_limit'),
                     gap_tol=config.get('solver.gap_tol'),
                     int_tol=config.get('solver.int_tol'),
                     feas_tol=config.get('solver.feas_tol'),
                     bland_after=config.get('solver.bland_after'),
                     refactor_every=config.get('solver.refactor_every'))
        for key, value in overrides.items():
            if value is not None:
                setattr(params, key, value)
        return params

    def lp_params(self) -> LpParams:
        return LpParams(feas_tol=self.feas_tol, bland_after=self.bland_after,
                        refactor_every=self.refactor_every)


@dataclass
class _Node:
    node_id: int
    depth: int
    bound: float
    lo: np.ndarray
    hi: np.ndarray


class BranchAndBound:
    """
    Branch-and-bound solver for models whose integer variables are binaries.

    :param model: Model with a linear objective
    :param params: Limits and tolerances
    """

    def __init__(self, model: Model, params: Optional[MilpParams] = None):
        if model.has_quadratic:
            raise ModelError("solve_milp requires a linear objective")
        self.model = model
        self.params = params or MilpParams()
        self.form = StandardForm(model)
        self.binaries = np.array(model.binary_ids(), dtype=int)
        self.direction = 1.0 if model.sense is ObjectiveSense.MAXIMIZE else -1.0
        self.logger = logging.getLogger(f'{__name__}.BranchAndBound')

        self._heap: List[Tuple[float, int, int, _Node]] = []
        self._next_id = 0
        self._start = 0.0
        self.incumbent: Optional[np.ndarray] = None
        self.best_score = -np.inf
        self.stats = SolveStats(sense=model.sense)

    # scores are objective values oriented so that larger is better

    def _solve_node(self, lo: np.ndarray, hi: np.ndarray):
        return solve_standard(self.form, lo, hi, self.params.lp_params())

    def _push(self, depth: int, bound: float, lo: np.ndarray, hi: np.ndarray):
        node = _Node(self._next_id, depth, bound, lo, hi)
        self._next_id += 1
        heapq.heappush(self._heap, (-bound, -depth, -node.node_id, node))

    def _elapsed(self) -> float:
        return time.perf_counter() - self._start

    def _dual_score(self) -> float:
        if self._heap:
            return max(self.best_score, -self._heap[0][0])
        return self.best_score

    def _gap_closed(self) -> bool:
        if self.incumbent is None:
            return False
        slack = self.params.gap_tol * max(1.0, abs(self.best_score))
        return self._dual_score() - self.best_score <= slack

    def _update_stats(self, record: bool):
        dual = self._dual_score()
        stats = self.stats
        new_dual = None if not np.isfinite(dual) else self.direction * dual
        if stats.dual is not None and new_dual is not None:
            # never report a worse bound than one already proven
            if self.direction * (new_dual - stats.dual) > 0:
                new_dual = stats.dual
        changed = new_dual != stats.dual
        stats.dual = new_dual
        stats.primal = None if self.incumbent is None else self.direction * self.best_score
        stats.nodes_open = len(self._heap)
        if record or changed:
            stats.record(self._elapsed())

    def _most_fractional(self, x: np.ndarray) -> int:
        values = x[self.binaries]
        frac = np.abs(values - np.round(values))
        if frac.size == 0 or frac.max() <= self.params.int_tol:
            return -1
        # argmax returns the first maximum, i.e. the lowest variable id
        return int(self.binaries[np.argmax(frac)])

    def _polish(self, x: np.ndarray, lo: np.ndarray, hi: np.ndarray, score: float):
        """Re-solve with binaries fixed to their rounded values."""
        fixed_lo, fixed_hi = lo.copy(), hi.copy()
        rounded = np.round(x[self.binaries])
        fixed_lo[self.binaries] = rounded
        fixed_hi[self.binaries] = rounded
        result = self._solve_node(fixed_lo, fixed_hi)
        if result.is_optimal:
            return result.x, self.direction * result.objective
        x = x.copy()
        x[self.binaries] = rounded
        return x, score

    def solve(self) -> Tuple[Optional[np.ndarray], SolveStats]:
        self._start = time.perf_counter()
        params = self.params
        stats = self.stats

        root = self._solve_node(self.form.lo, self.form.hi)
        stats.nodes_closed = 1
        if root.status is SolveStatus.UNBOUNDED:
            stats.status = SolveStatus.UNBOUNDED
            stats.elapsed = self._elapsed()
            stats.record(stats.elapsed)
            return None, stats
        if not root.is_optimal:
            stats.status = SolveStatus.INFEASIBLE
            stats.elapsed = self._elapsed()
            stats.record(stats.elapsed)
            return None, stats

        self._consider(root, self.form.lo.copy(), self.form.hi.copy(), depth=0)
        self._update_stats(record=True)

        limit_hit = False
        while self._heap and not self._gap_closed():
            if params.node_limit is not None and stats.nodes_closed >= params.node_limit:
                limit_hit = True
                break
            if params.time_limit is not None and self._elapsed() >= params.time_limit:
                limit_hit = True
                break
            _, _, _, node = heapq.heappop(self._heap)
            if self.incumbent is not None and node.bound <= self.best_score + self._prune_slack():
                self._update_stats(record=False)
                continue
            result = self._solve_node(node.lo, node.hi)
            stats.nodes_closed += 1
            if result.is_optimal:
                self._consider(result, node.lo, node.hi, node.depth)
            self._update_stats(record=False)

        if limit_hit:
            stats.status = SolveStatus.LIMIT
            self.logger.warning("Branch-and-bound stopped at limit",
                                extra={'nodes_closed': stats.nodes_closed, 'nodes_open': len(self._heap)})
        elif self.incumbent is None:
            stats.status = SolveStatus.INFEASIBLE
        else:
            stats.status = SolveStatus.OPTIMAL
            self._heap.clear()

        self._update_stats(record=False)
        if stats.status is SolveStatus.OPTIMAL and stats.dual is not None and stats.primal is not None:
            if self.direction * (stats.dual - stats.primal) < 0:
                stats.dual = stats.primal
        stats.elapsed = self._elapsed()
        stats.record(stats.elapsed)
        stats.validate(tol=max(params.gap_tol, 1e-9))
        self.logger.debug("Branch-and-bound finished", extra={'status': stats.status.value,
                                                              'nodes_closed': stats.nodes_closed})
        return self.incumbent, stats

    def _prune_slack(self) -> float:
        return self.params.gap_tol * max(1.0, abs(self.best_score))

    def _consider(self, result, lo: np.ndarray, hi: np.ndarray, depth: int):
        score = self.direction * result.objective
        if self.incumbent is not None and score <= self.best_score + self._prune_slack():
            return
        j = self._most_fractional(result.x)
        if j < 0:
            x, value = self._polish(result.x, lo, hi, score)
            if self.incumbent is None or value > self.best_score:
                self.incumbent = x
                self.best_score = value
                self.logger.info("New incumbent %.6g", self.direction * value,
                                 extra={'nodes_closed': self.stats.nodes_closed})
                self._update_stats(record=True)
            return
        down_hi = hi.copy()
        down_hi[j] = 0.0
        up_lo = lo.copy()
        up_lo[j] = 1.0
        self._push(depth + 1, score, lo.copy(), down_hi)
        self._push(depth + 1, score, up_lo, hi.copy())


def solve_milp(model: Model, params: Optional[MilpParams] = None) -> Tuple[Optional[np.ndarray], SolveStats]:
    """
    Solve ``model`` by branch-and-bound.

    :param model: Model with binary and continuous variables and a linear objective
    :param params: time_limit, node_limit, gap_tol, int_tol
    :return: (solution or None, SolveStats)
    """
    return BranchAndBound(model, params).solve()
