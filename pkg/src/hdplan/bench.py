"""
Benchmark of the base and strengthened encodings on one instance.

Each setting (``base`` or ``n<N>``) computes its potentials if needed,
compiles, solves under shared limits and yields one report row plus the
bound and node timeline of its branch-and-bound run.
"""

import json
import time
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from joblib import Parallel, delayed

from .compiler import compile_base, compile_strengthened, root_relaxation
from .errors import HDPlanError
from .milp_core import MilpParams, SolveStats, SolveStatus, solve_milp
from .nn_model import NeuralNet, propagate_bounds
from .potentials import compute_potentials
from .problem import PlanningInstance

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ['setting', 'alg1_time', 'cumulative_time', 'primal', 'dual', 'open', 'closed', 'status',
                 'root_relaxation', 'best']
TIMELINE_COLUMNS = ['setting', 't', 'dual', 'primal', 'open', 'closed']
USABLE = (SolveStatus.OPTIMAL.value, SolveStatus.FEASIBLE.value, SolveStatus.LIMIT.value)


def parse_setting(name: str) -> int:
    """Interval count of a setting name; 0 for the base encoding."""
    if name == 'base':
        return 0
    if name.startswith('n') and name[1:].isdigit() and int(name[1:]) >= 1:
        return int(name[1:])
    raise ValueError(f"unknown bench setting {name!r}; use base or n<N> with N >= 1")


@dataclass
class BenchRow:
    setting: str
    alg1_time: float = 0.0
    cumulative_time: float = 0.0
    primal: Optional[float] = None
    dual: Optional[float] = None
    open: int = 0
    closed: int = 0
    status: str = 'error'
    root_relaxation: Optional[float] = None
    best: bool = False
    message: str = ''

    @property
    def usable(self) -> bool:
        return self.status in USABLE

    def sort_key(self, time_limit: Optional[float] = None) -> Tuple[float, float, float]:
        """
        Runtime, then incumbent, then bound (maximization). Rows stopped by a
        limit tie on runtime; a missing incumbent ranks after any real one.
        """
        timed_out = self.status == SolveStatus.LIMIT.value or (
            time_limit is not None and self.cumulative_time >= time_limit)
        runtime = float('inf') if timed_out else self.cumulative_time
        primal = -self.primal if self.primal is not None else float('inf')
        dual = self.dual if self.dual is not None else float('inf')
        return runtime, primal, dual


@dataclass
class BenchReport:
    instance: str
    rows: List[BenchRow] = field(default_factory=list)
    stats: Dict[str, SolveStats] = field(default_factory=dict)
    time_limit: Optional[float] = None

    def mark_best(self) -> Optional[BenchRow]:
        for row in self.rows:
            row.best = False
        candidates = [row for row in self.rows if row.usable]
        if not candidates:
            return None
        best = min(candidates, key=lambda row: row.sort_key(self.time_limit))
        best.best = True
        return best

    @property
    def best(self) -> Optional[BenchRow]:
        return next((row for row in self.rows if row.best), None)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{c: getattr(row, c) for c in BENCH_COLUMNS} for row in self.rows], columns=BENCH_COLUMNS)

    def timeline_frame(self) -> pd.DataFrame:
        frames = []
        for row in self.rows:
            stats = self.stats.get(row.setting)
            if stats is None:
                continue
            frame = stats.timeline_frame()
            frame.insert(0, 'setting', row.setting)
            frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=TIMELINE_COLUMNS)
        return pd.concat(frames, ignore_index=True)[TIMELINE_COLUMNS]

    def to_dict(self) -> Dict[str, Any]:
        best = self.best
        return {
            'instance': self.instance,
            'best': best.setting if best else None,
            'rows': [asdict(row) for row in self.rows],
        }

    def write(self, csv_path: str, json_path: Optional[str] = None, timeline_path: Optional[str] = None):
        self.to_frame().to_csv(csv_path, index=False)
        if json_path:
            with open(json_path, 'w') as f:
                json.dump(self.to_dict(), f, indent=2, sort_keys=True)
                f.write('\n')
        if timeline_path:
            self.timeline_frame().to_csv(timeline_path, index=False)


def run_setting(instance: PlanningInstance, net: NeuralNet, setting: str, params: MilpParams,
                lam: Optional[float] = None, epsilon: Optional[float] = None,
                config=None) -> Tuple[BenchRow, Optional[SolveStats]]:
    """
    One bench row. Failures become a row with status ``error`` and never raise.
    """
    row = BenchRow(setting)
    try:
        intervals = parse_setting(setting)
        bounds = propagate_bounds(net, instance.input_box(net))
        start = time.perf_counter()
        if intervals == 0:
            compiled = compile_base(instance, net, bounds)
        else:
            potentials, trace = compute_potentials(net, instance, bounds, intervals=intervals, lam=lam,
                                                   epsilon=epsilon, config=config)
            row.alg1_time = time.perf_counter() - start
            compiled = compile_strengthened(instance, net, bounds, potentials)
        row.root_relaxation = root_relaxation(compiled, params.lp_params())
        _, stats = solve_milp(compiled.model, params)
    except (HDPlanError, ValueError) as e:
        logger.error("Bench setting %s failed: %s", setting, e)
        row.message = str(e)
        return row, None

    row.cumulative_time = row.alg1_time + stats.elapsed
    row.primal, row.dual = stats.primal, stats.dual
    row.open, row.closed = stats.nodes_open, stats.nodes_closed
    row.status = stats.status.value
    logger.info("Bench setting %s: status %s, closed %d nodes", setting, row.status, row.closed)
    return row, stats


def run_bench(instance: PlanningInstance, net: NeuralNet, settings: Sequence[str],
              params: Optional[MilpParams] = None, lam: Optional[float] = None,
              epsilon: Optional[float] = None, n_jobs: int = 1, config=None) -> BenchReport:
    """
    Run every setting under the same limits and mark the best one.

    :param settings: Names such as ``base``, ``n1``, ``n2``
    :param params: Shared branch-and-bound limits
    :param n_jobs: Settings solved in parallel (joblib)
    :return: BenchReport with rows in the requested order
    """
    params = params or MilpParams.from_config(config)
    results = Parallel(n_jobs=n_jobs)(
        delayed(run_setting)(instance, net, setting, params, lam, epsilon, config) for setting in settings)
    report = BenchReport(instance.name, time_limit=params.time_limit)
    for row, stats in results:
        report.rows.append(row)
        if stats is not None:
            report.stats[row.setting] = stats
    best = report.mark_best()
    if best is not None:
        logger.info("Best setting: %s", best.setting)
    return report
