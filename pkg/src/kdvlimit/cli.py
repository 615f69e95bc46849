"""
CLI interface for kdvlimit
Subcommands map onto runner.run; init-config copies the bundled defaults
"""
import argparse
import logging
import os
import shutil
import sys
from typing import Any, Dict

from . import __version__
from .config import DEFAULT_CONFIG_NAME, bundled_config_path
from .runner import EXIT_OK, run

# CSV columns written by each experiment subcommand, shown in --help
ARTIFACT_HELP = {
    'simulate': "Artifacts:\n"
                "  trajectory.csv  t,k,re,im  (physical coefficients for k >= 0)\n"
                "  norms.csv       t,l2,hs",
    'sweep': "Artifacts:\n"
             "  sweep.csv       epsilon,distance,s,T,K,seed,fingerprint\n"
             "  rate_fit.json   slope, intercept, r_squared (when fit is true)",
    'verify-lemmas': "Artifacts:\n"
                     "  claims.csv      claim,checked,violations,holds\n"
                     "  lemmas.json     counterexamples and measured constants per claim",
    'probe': "Artifacts:\n"
             "  probe.csv       operator,s,N,K,trials,max_ratio,unrestricted_max_ratio,fitted_exponent,"
             "unrestricted_exponent\n"
             "  probe.json      full probe reports",
    'report': "Artifacts:\n"
              "  l2_identity.csv t,value,residual\n"
              "  hamiltonian.csv t,value,residual  (kdvb only)\n"
              "  l2_norm.csv     t,value,residual\n"
              "  budget.json     energy budget and Burgers-term report\n"
              "  lipschitz.csv   epsilon,sup_difference,data_difference,ratio  (lipschitz_perturbation > 0)",
    'truncation': "Artifacts:\n"
                  "  truncation.csv  cutoff,data_tail,viscous_leg,truncated_gap,inviscid_leg,leg_sum,direct,"
                  "triangle_holds",
}

SUBCOMMAND_HELP = {
    'simulate': 'Solve one initial value problem and write the trajectory',
    'sweep': 'Measure the viscous/inviscid distance across epsilons and fit the rate',
    'verify-lemmas': 'Exhaustively check the phase identities and lower bounds',
    'probe': 'Estimate operator constants over randomized inputs',
    'report': 'Write conservation, dissipation and budget diagnostics',
    'truncation': 'Split the inviscid distance through frequency-truncated data',
}


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {'output_dir': args.out, 'seed': args.seed, 'threads': args.threads}


def experiment_command(args: argparse.Namespace) -> None:
    """Execute an experiment subcommand through the runner"""
    # an empty --config or --out would silently fall back to the defaults
    file_args = [('--config', args.config), ('--out', args.out)]
    empty_file_args = [arg_name for arg_name, arg_value in file_args if arg_value is not None and not arg_value.strip()]

    if empty_file_args:
        logging.error(f"Empty file path provided for: {', '.join(empty_file_args)}")
        logging.error("Either provide valid paths or omit the arguments to use defaults")
        sys.exit(1)

    logging.info(f"Starting {args.command}...")
    status = run(args.config, args.command, _overrides(args))
    if status != EXIT_OK:
        sys.exit(status)
    logging.info(f"{args.command} complete.")


def init_config_command(args: argparse.Namespace) -> None:
    """Copy the bundled defaults to an editable file"""
    target = args.output or DEFAULT_CONFIG_NAME

    if os.path.exists(target) and not args.force:
        logging.error(f"{target} already exists; pass --force to replace it")
        sys.exit(1)

    try:
        shutil.copy2(bundled_config_path(), target)
    except OSError as e:
        logging.error(f"Could not write {target}: {e}")
        sys.exit(1)

    logging.info(f"Wrote default configuration to {target}")
    logging.info("Keys left unchanged keep their bundled defaults; keys removed fall back to them.")
    if os.path.basename(target) == DEFAULT_CONFIG_NAME and os.path.dirname(target) in ("", "."):
        logging.info("Subcommands run from this directory pick it up without --config.")
    else:
        logging.info(f"Pass --config {target} to subcommands to use it.")


class CustomHelpFormatter(argparse.RawDescriptionHelpFormatter):
    """Wide help output that keeps the artifact epilogs unwrapped"""
    def __init__(self, prog: str) -> None:
        super().__init__(prog, max_help_position=70, width=180)


def _add_experiment_parser(subparsers, name: str) -> argparse.ArgumentParser:
    sub = subparsers.add_parser(name, help=SUBCOMMAND_HELP[name], epilog=ARTIFACT_HELP[name],
                                formatter_class=CustomHelpFormatter)
    sub.add_argument('-c', '--config',
                     help='Configuration file (searches ./kdvlimit.yaml, ~/.kdvlimit/config.yaml, then the bundled default)')
    sub.add_argument('-o', '--out',
                     help='Output directory for run directories (overrides output_dir)')
    sub.add_argument('--seed', type=int,
                     help='Random seed (overrides seed)')
    sub.add_argument('--threads', type=int,
                     help='Worker processes (overrides threads)')
    sub.add_argument('-v', '--verbose', action='store_true',
                     help='Enable verbose logging')
    sub.set_defaults(func=experiment_command)
    return sub


def create_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser"""
    parser = argparse.ArgumentParser(
        description="kdvlimit - pseudospectral workbench for the inviscid limit of KdV-Burgers and mKdV-Burgers",
        formatter_class=CustomHelpFormatter
    )

    parser.add_argument('--version', action='version', version=f'kdvlimit {__version__}')

    # not required, so that a bare --version parses
    subparsers = parser.add_subparsers(dest='command')

    for name in SUBCOMMAND_HELP:
        _add_experiment_parser(subparsers, name)

    init_parser = subparsers.add_parser('init-config', help='Copy the bundled defaults to an editable YAML file',
                                        formatter_class=CustomHelpFormatter)
    init_parser.add_argument('-o', '--output', default=DEFAULT_CONFIG_NAME,
                             help='Target file (default: kdvlimit.yaml)')
    init_parser.add_argument('-f', '--force', action='store_true',
                             help='Replace the target if it exists')
    init_parser.add_argument('-v', '--verbose', action='store_true',
                             help='Enable verbose logging')
    init_parser.set_defaults(func=init_config_command)

    return parser


def main() -> None:
    """Main CLI entry point with subcommand dispatch"""
    parser = create_parser()

    args = parser.parse_args()

    # --version has already exited inside parse_args
    if not hasattr(args, 'func') or args.func is None:
        parser.error("the following arguments are required: command")

    # -v exists on every subcommand
    log_level = logging.INFO if getattr(args, 'verbose', False) else logging.WARNING
    logging.basicConfig(level=log_level, format='%(asctime)s - %(levelname)s - %(message)s')

    try:
        args.func(args)
    except FileNotFoundError as e:
        logging.error(f"File not found: {e}")
        sys.exit(1)
    except Exception as e:
        logging.error(f"Error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
