#!/usr/bin/env python3
"""
HD-Plan command line.

Subcommands:
    gen         write a synthetic instance
    potentials  compute reward potentials by constraint generation
    plan        solve the base or strengthened MILP and emit a checked plan
    bench       compare encodings under shared limits
"""

import os
import sys
import json
import argparse
import logging
from typing import List, Optional

from .bench import parse_setting, run_bench
from .compiler import compile_base, compile_strengthened
from .config_manager import ConfigManager, get_config_manager
from .domains import DOMAIN_KINDS, DomainSpec, generate
from .errors import DegenerateInstanceError, HDPlanError, InfeasibleError
from .instance_io import dumps_instance, load_instance
from .logging_utils import setup_logging
from .milp_core import MilpParams, SolveStatus, export_lp_format, solve_milp
from .nn_model import propagate_bounds
from .potentials import RewardPotentials, compute_potentials, default_lambda, oracle_enumerate
from .problem import Plan, check_plan, simulate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def _write_json(document, path: Optional[str]):
    text = json.dumps(document, indent=2, sort_keys=True) + '\n'
    if path:
        with open(path, 'w') as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _parse_widths(text: Optional[str]):
    if text is None:
        return None
    try:
        return tuple(int(w) for w in text.split(':'))
    except ValueError:
        raise ValueError(f"widths must look like 4:6:2, got {text!r}")


def cmd_gen(args, config, logger: logging.Logger) -> int:
    spec = DomainSpec(kind=args.domain, size=args.size, horizon=args.horizon, seed=args.seed,
                      widths=_parse_widths(args.widths), hidden=args.hidden, paper_widths=args.paper_widths)
    instance, net = generate(spec)
    text = dumps_instance(instance, net)
    if args.output:
        with open(args.output, 'w') as f:
            f.write(text)
        logger.info(f"Instance {instance.name} ({net.structure}) written to {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_potentials(args, config, logger: logging.Logger) -> int:
    instance, net = load_instance(args.instance)
    bounds = propagate_bounds(net, instance.input_box(net))
    intervals = args.intervals or config.get('potentials.intervals')
    epsilon = args.epsilon or config.get('potentials.epsilon')
    lam = args.lam if args.lam is not None else config.get('potentials.lambda')
    if lam is None:
        lam = default_lambda(bounds)

    trace = None
    if args.oracle:
        potentials = oracle_enumerate(net, instance, bounds, intervals, lam, epsilon,
                                      max_patterns=config.get('potentials.oracle_max_patterns'),
                                      n_jobs=args.jobs or config.get('potentials.n_jobs'))
    else:
        potentials, trace = compute_potentials(net, instance, bounds, intervals=intervals, lam=lam,
                                               epsilon=epsilon, max_iterations=args.max_iterations, config=config)

    _write_json(potentials.to_dict(), args.output)
    if trace is not None:
        trace_path = args.trace or (os.path.splitext(args.output)[0] + '_trace.csv' if args.output else None)
        if trace_path:
            trace.write_csv(trace_path)
            logger.info(f"Constraint generation trace written to {trace_path}")
        logger.info(f"Certified violation {potentials.certified_violation:.3e} after "
                    f"{len(trace.iterations)} iterations")
    return EXIT_OK if potentials.certified else EXIT_ERROR


def _milp_params(args, config) -> MilpParams:
    return MilpParams.from_config(config, time_limit=args.time_limit, node_limit=args.node_limit)


def cmd_plan(args, config, logger: logging.Logger) -> int:
    instance, net = load_instance(args.instance)
    bounds = propagate_bounds(net, instance.input_box(net))
    if args.strengthen:
        potentials = RewardPotentials.load(args.strengthen)
        compiled = compile_strengthened(instance, net, bounds, potentials)
    else:
        compiled = compile_base(instance, net, bounds)
    logger.info(f"Compiled {compiled.model!r}")

    if args.export_lp:
        with open(args.export_lp, 'w') as f:
            f.write(export_lp_format(compiled.model))
        logger.info(f"LP-format model written to {args.export_lp}")

    x, stats = solve_milp(compiled.model, _milp_params(args, config))
    if args.stats:
        with open(args.stats, 'w') as f:
            f.write(stats.to_json() + '\n')

    if stats.status is SolveStatus.INFEASIBLE:
        raise InfeasibleError("planning MILP is infeasible")
    if x is None:
        logger.error(f"Solver stopped with status {stats.status.value} and no incumbent")
        return EXIT_ERROR

    plan = compiled.extract_plan(x)
    tol = config.get('plan.check_tol')
    report = check_plan(instance, net, Plan(plan.actions), tol=tol)
    if not report.valid:
        logger.error(f"Refusing to emit plan: max violation {report.max_violation:.3e} exceeds {tol}")
        for violation in report.violations[:10]:
            logger.error(f"  {violation.kind} at step {violation.step}, index {violation.index}: "
                         f"{violation.magnitude:.3e}")
        return EXIT_ERROR

    trajectory = simulate(instance, net, Plan(plan.actions))
    if abs(trajectory.total_reward - plan.objective) > tol:
        logger.error(f"Refusing to emit plan: simulated reward {trajectory.total_reward:.6g} differs from "
                     f"objective {plan.objective:.6g} by more than {tol}")
        return EXIT_ERROR

    document = {
        'instance': instance.name,
        'encoding': f'n{compiled.intervals}' if compiled.intervals else 'base',
        'status': stats.status.value,
        'objective': plan.objective,
        'simulated_reward': trajectory.total_reward,
        'actions': plan.actions.tolist(),
        'states': trajectory.states.tolist(),
        'check': report.to_dict(),
    }
    _write_json(document, args.output)
    logger.info(f"Plan with objective {plan.objective:.6g} ({stats.status.value}, "
                f"{stats.nodes_closed} nodes closed)")
    return EXIT_OK


def cmd_bench(args, config, logger: logging.Logger) -> int:
    instance, net = load_instance(args.instance)
    settings = [s.strip() for s in args.settings.split(',') if s.strip()]
    for setting in settings:
        parse_setting(setting)
    report = run_bench(instance, net, settings, _milp_params(args, config), lam=args.lam, epsilon=args.epsilon,
                       n_jobs=args.jobs, config=config)
    csv_path = args.output
    stem = os.path.splitext(csv_path)[0]
    report.write(csv_path, json_path=args.json or stem + '.json', timeline_path=args.timelines or stem + '_timelines.csv')

    print("\n" + "=" * 60)
    print(f"BENCH: {instance.name}")
    print("=" * 60)
    print(report.to_frame().to_string(index=False))
    best = report.best
    print(f"Best setting: {best.setting if best else 'none'}")
    print("=" * 60)
    return EXIT_OK if best is not None else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='hdplan', description='Planning with ReLU transition networks via MILP')
    parser.add_argument('--config', help='YAML configuration file')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Logging level')
    parser.add_argument('--log-json', action='store_true', help='Emit JSON log records')
    parser.add_argument('--log-file', help='Also log to this file')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', help='Generate a synthetic instance')
    gen.add_argument('--domain', required=True, choices=DOMAIN_KINDS)
    gen.add_argument('--size', type=int, help='Maze side / reservoirs / rooms / pairs')
    gen.add_argument('--horizon', type=int)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--widths', help='Layer widths of a random network, e.g. 4:6:2')
    gen.add_argument('--hidden', type=int, help='Hidden width of the navigation network')
    gen.add_argument('--paper-widths', action='store_true', help='Wide two-layer networks')
    gen.add_argument('-o', '--output', help='Output file (default stdout)')
    gen.set_defaults(handler=cmd_gen)

    pot = sub.add_parser('potentials', help='Compute reward potentials')
    pot.add_argument('instance')
    pot.add_argument('--intervals', '-N', type=int, help='Interval count N')
    pot.add_argument('--lambda', dest='lam', type=float, help='Regularizer weight (default 1/sqrt(M))')
    pot.add_argument('--epsilon', type=float, help='Violation tolerance')
    pot.add_argument('--max-iterations', type=int, help='Guard on generated patterns')
    pot.add_argument('--oracle', action='store_true', help='Enumerate all patterns instead')
    pot.add_argument('--jobs', type=int, help='Parallel LPs for --oracle')
    pot.add_argument('--trace', help='Trace CSV (default <output>_trace.csv)')
    pot.add_argument('-o', '--output', help='Potentials JSON (default stdout)')
    pot.set_defaults(handler=cmd_potentials)

    plan = sub.add_parser('plan', help='Solve the planning MILP')
    plan.add_argument('instance')
    plan.add_argument('--strengthen', metavar='POTENTIALS', help='Potentials JSON for the strengthened encoding')
    plan.add_argument('--time-limit', type=float)
    plan.add_argument('--node-limit', type=int)
    plan.add_argument('--export-lp', help='Write the compiled model in LP format')
    plan.add_argument('--stats', help='SolveStats JSON')
    plan.add_argument('-o', '--output', help='Plan JSON (default stdout)')
    plan.set_defaults(handler=cmd_plan)

    bench = sub.add_parser('bench', help='Benchmark encodings')
    bench.add_argument('instance')
    bench.add_argument('--settings', default='base,n1,n2,n3')
    bench.add_argument('--time-limit', type=float)
    bench.add_argument('--node-limit', type=int)
    bench.add_argument('--lambda', dest='lam', type=float)
    bench.add_argument('--epsilon', type=float)
    bench.add_argument('--jobs', type=int, default=1, help='Settings solved in parallel')
    bench.add_argument('--json', help='Report JSON (default <output>.json)')
    bench.add_argument('--timelines', help='Timelines CSV (default <output>_timelines.csv)')
    bench.add_argument('-o', '--output', default='bench.csv', help='Bench CSV')
    bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.config:
            ConfigManager.reset()
        config = get_config_manager(args.config)
    except HDPlanError as e:
        print(f"hdplan: {e}", file=sys.stderr)
        return EXIT_ERROR

    logger = setup_logging(args.log_level or config.get('logging.level'),
                           json_format=args.log_json or config.get('logging.json'),
                           log_file=args.log_file or config.get('logging.file'))
    logger.debug(f"Running {args.command}")

    try:
        return args.handler(args, config, logger)
    except (InfeasibleError, DegenerateInstanceError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_INFEASIBLE
    except (HDPlanError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
