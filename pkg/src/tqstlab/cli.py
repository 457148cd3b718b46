"""Command-line entry point.

    tqstlab sweep|entangled|scan|report --config <file>
            [--noise <file>] [--layout <file>] [--out <dir>] [--seed <u64>]

Exit codes: 0 on success, 2 on contract errors, 3 on reconstruction
non-convergence.
"""

import argparse
import sys

from .errors import ContractError, ReconstructionError
from .harness import EXPERIMENTS, load_config, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(prog="tqstlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="experiment config JSON")
        cmd.add_argument("--noise", default=None, help="noise parameter JSON")
        cmd.add_argument("--layout", default=None, help="mesh layout JSON")
        cmd.add_argument("--out", default=None, help="output directory override")
        cmd.add_argument("--seed", type=int, default=None, help="seed override")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.config,
            noise_path=args.noise,
            layout_path=args.layout,
            out_dir=args.out,
            seed=args.seed,
        )
        if config.experiment != args.command:
            raise ContractError(
                f"config declares experiment {config.experiment!r}, "
                f"but the {args.command!r} subcommand was invoked"
            )
        run_experiment(config)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ReconstructionError as exc:
        print(f"reconstruction failed: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
