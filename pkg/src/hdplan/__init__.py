"""
HD-Plan: planning with ReLU transition networks compiled to MILPs, with
reward potentials that strengthen the linear relaxation.
"""

from .errors import HDPlanError
from .nn_model import NeuralNet, UnitBounds, NetworkBounds, forward, load_network, propagate_bounds
from .problem import (
    PlanningInstance,
    Plan,
    PlanReport,
    RewardSpec,
    Trajectory,
    check_plan,
    evaluate_reward,
    simulate,
)
from .potentials import (
    CgTrace,
    RewardPotentials,
    compute_potentials,
    oracle_enumerate,
    solve_master,
    solve_subproblem,
)
from .compiler import CompiledModel, compile_base, compile_strengthened, root_relaxation
from .domains import DomainSpec, generate
from .instance_io import load_instance, dump_instance
from .bench import BenchReport, BenchRow, run_bench

__version__ = '0.1.0'

__all__ = [
    'HDPlanError',
    'NeuralNet', 'UnitBounds', 'NetworkBounds', 'forward', 'load_network', 'propagate_bounds',
    'PlanningInstance', 'Plan', 'PlanReport', 'RewardSpec', 'Trajectory',
    'check_plan', 'evaluate_reward', 'simulate',
    'CgTrace', 'RewardPotentials', 'compute_potentials', 'oracle_enumerate', 'solve_master', 'solve_subproblem',
    'CompiledModel', 'compile_base', 'compile_strengthened', 'root_relaxation',
    'DomainSpec', 'generate', 'load_instance', 'dump_instance',
    'BenchReport', 'BenchRow', 'run_bench',
]
