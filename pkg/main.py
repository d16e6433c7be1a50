"""
Main entry point for coalgene.

Simulates genealogies of asymmetric population models and checks their
convergence to Lambda- and Xi-coalescents. A configuration file describes the
experiment; command-line flags override individual values.
"""

import argparse
import sys
from typing import Any, Sequence

from services.config_parser import CHECK_COMMANDS, build_config, read_config

CHECK_NAMES = (
    "semigroup",
    "lambda-criterion",
    "kingman-criterion",
    "xi-functionals",
    "replacement",
    "bottleneck",
    "pd-theorem",
    "em-theorem",
    "em-equivalence",
    "discrete-limit",
)
COMMAND_HELP = {
    "rates": "tabulate coagulation rates of a limit measure",
    "constants": "evaluate the closed-form constants of a PD-power or exponential model",
    "simulate": "simulate sample genealogies",
    "estimate-cn": "estimate the pair coalescence probability c_N",
    "transition": "estimate one-step transition probabilities from 0_n",
    "pd": "check stick-breaking identities of PD size-biased picks",
    "check": "run a diagnostic check",
    "plotdata": "write the per-N rows of a diagnostic check as CSV",
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON or TOML run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="experiment seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file (stdout when omitted)")
    return common


def _run_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--measure", help="limit measure, e.g. kingman, beta:2,2 or point:0.5:1")
    flags.add_argument("--n", type=int, help="sample size")
    flags.add_argument("--N", type=int, nargs="+", help="population size(s)")
    flags.add_argument("--reps", type=int, help="Monte Carlo replicates")
    flags.add_argument("--alpha", type=float, help="PD alpha")
    flags.add_argument("--theta", type=float, help="PD theta")
    flags.add_argument("--gamma", type=float, help="PD-power exponent gamma")
    return flags


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="coalgene", description=__doc__.strip().splitlines()[0], parents=[common])
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMAND_HELP.items():
        sub = commands.add_parser(name, help=help_text, parents=[common, _run_flags()])
        if name in CHECK_COMMANDS:
            sub.add_argument("check_name", choices=CHECK_NAMES, help="diagnostic check")
    return parser


def config_overrides(args: argparse.Namespace, has_model_kind: bool) -> dict[str, Any]:
    """Dotted config keys set by command-line flags."""
    overrides: dict[str, Any] = {
        "command": args.command,
        "check": getattr(args, "check_name", None),
        "limit": args.measure,
        "run.seed": getattr(args, "seed", None),
        "run.n": args.n,
        "run.replicates": args.reps,
        "output.path": getattr(args, "out", None),
        "model.alpha": args.alpha,
        "model.theta": args.theta,
        "model.gamma": args.gamma,
    }
    if args.N:
        overrides["run.N"] = args.N[-1]
        overrides["run.N_list"] = list(args.N)
    if not has_model_kind and any(v is not None for v in (args.alpha, args.theta, args.gamma)):
        overrides["model.kind"] = "pd_power"
    return overrides


def main(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments, build the run configuration and execute it.

    Returns:
        Process exit code: 0 success or pass, 2 fail, 3 indeterminate, 1 error
    """
    args = build_parser().parse_args(argv)

    def report_error(message: str) -> None:
        print(f"ERROR: {message}", file=sys.stderr)

    try:
        from core.run_manager import CoalgeneRunManager

        config_path = getattr(args, "config", None)
        data = read_config(config_path) if config_path else {}
        model_block = data.get("model")
        has_kind = isinstance(model_block, dict) and "kind" in model_block
        config = build_config(data, config_overrides(args, has_kind))
    except ImportError as e:
        report_error(f"dependencies not available: {e}")
        return 1
    except (ValueError, OSError) as e:
        report_error(str(e))
        return 1

    manager = CoalgeneRunManager(error_callback=report_error)
    return manager.run(config, threads=getattr(args, "threads", None))


if __name__ == "__main__":
    sys.exit(main())
