"""
Quantum Reversibility Toolkit - Main Entry Point

A command line application for realized collapse dynamics: simulation,
minimal-energy steering, chain searches, recurrence certificates and
operational reversibility reports.
"""

import argparse
import json
import sys
from typing import Any, List, Optional, Tuple

from cli.app import DEFAULT_WINDOW, ExperimentRunner
from services.errors import ConfigError, ReversibilityError
from services.scenario_service import load_scenario
from services.validation_service import validate_epsilon, validate_output_dir
from utils.logger import apply_log_settings, setup_logger


logger = setup_logger(__name__)

COMMANDS = ('simulate', 'steer', 'chain-search', 'recurrence', 'reversibility', 'grid-diagnostic')


def _window(text: str) -> Tuple[float, float, float]:
    try:
        values = tuple(float(x) for x in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Window must be three numbers tau0,tau,tau1: {text!r}")
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"Window must be three numbers tau0,tau,tau1: {text!r}")
    return values


def _state(text: str) -> Any:
    """A state spec string, or a JSON amplitude list such as [[0.6, 0], [0, 0.8]]."""
    if not text.lstrip().startswith('['):
        return text
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"Invalid amplitude list: {e.msg}")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per experiment."""
    parser = argparse.ArgumentParser(
        prog='qrev',
        description='Realized collapse dynamics: steering, chains and recurrence at finite precision.'
    )
    parser.add_argument('--log-level', default=None, help='Logging level (default: QREV_LOG_LEVEL or INFO)')
    parser.add_argument('--log-dir', default=None, help='Directory for daily log files')
    sub = parser.add_subparsers(dest='command', required=True)

    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument('--scenario', required=True, help='Scenario JSON file')
        cmd.add_argument('--output', default=None, help='Report directory (overrides output.directory)')
        cmd.add_argument('--seed', type=int, default=None, help='Overrides every seed in the scenario')
        cmd.add_argument('--x0', type=_state, default=None, help='Initial state spec (default basis:0)')
        if name in ('steer', 'chain-search'):
            cmd.add_argument('--target', type=_state, required=True, help='Target state spec')
        if name in ('chain-search', 'reversibility'):
            cmd.add_argument('--epsilon', type=float, default=None, help='Scale (default: smallest scenario scale)')
        if name == 'simulate':
            cmd.add_argument('--steps', type=int, default=10, help='Number of realized steps')
        if name == 'steer':
            cmd.add_argument('--window', type=_window, default=DEFAULT_WINDOW, help='tau0,tau,tau1')
        if name == 'grid-diagnostic':
            cmd.add_argument('--levels', type=int, default=6, help='Scales 2^-1 .. 2^-levels')
            cmd.add_argument('--seeds', type=int, default=1, help='Number of consecutive seeds to scan')
    return parser


def run(args: argparse.Namespace) -> None:
    """Dispatch one parsed command."""
    scenario = load_scenario(args.scenario, args.seed)
    if args.output is not None:
        ok, message = validate_output_dir(args.output)
        if not ok:
            raise ConfigError(message, field='output')
    if getattr(args, 'epsilon', None) is not None:
        ok, message = validate_epsilon(args.epsilon)
        if not ok:
            raise ConfigError(message, field='epsilon')

    runner = ExperimentRunner(scenario, args.output)
    if args.command == 'simulate':
        if args.steps < 1:
            raise ConfigError("Step count must be >= 1", field='steps')
        runner.simulate(args.x0, args.steps)
    elif args.command == 'steer':
        runner.steer(args.x0 or 'basis:0', args.target, args.window)
    elif args.command == 'chain-search':
        runner.chain_search(args.x0, args.target, args.epsilon)
    elif args.command == 'recurrence':
        runner.recurrence(args.x0)
    elif args.command == 'reversibility':
        runner.reversibility(args.x0, args.epsilon)
    elif args.command == 'grid-diagnostic':
        base_seed = args.seed if args.seed is not None else int(scenario.value('choice_rule.seed', 0))
        runner.grid_diagnostic(args.x0, args.levels, args.seeds, base_seed)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the application.

    Returns:
        Process exit code: 0 success, 2 config error, 3 precondition
        violation, 4 budget exhaustion
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ConfigError.exit_code if e.code else 0

    apply_log_settings(args.log_level, args.log_dir)
    try:
        run(args)
    except ReversibilityError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
