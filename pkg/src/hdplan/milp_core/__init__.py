"""
Built-in LP / MILP / diagonal-QP solving core.
"""

from .model import (
    Constraint,
    Model,
    ObjectiveSense,
    Sense,
    SolveStats,
    SolveStatus,
    TimelineSample,
    Variable,
    VarType,
)
from .simplex import LpParams, LpResult, StandardForm, solve_lp, solve_standard
from .branch_and_bound import BranchAndBound, MilpParams, solve_milp
from .qp import ActiveSetSolver, QpResult, solve_qp
from .lp_format import export_lp_format, parse_lp_format

__all__ = [
    'Constraint', 'Model', 'ObjectiveSense', 'Sense', 'SolveStats', 'SolveStatus',
    'TimelineSample', 'Variable', 'VarType',
    'LpParams', 'LpResult', 'StandardForm', 'solve_lp', 'solve_standard',
    'BranchAndBound', 'MilpParams', 'solve_milp',
    'ActiveSetSolver', 'QpResult', 'solve_qp',
    'export_lp_format', 'parse_lp_format',
]
