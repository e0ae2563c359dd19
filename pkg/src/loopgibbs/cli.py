"""Command-line entry point: named experiments driven by a config file.

Exit codes: 0 when every built-in check passes, 1 when a check fails,
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .harness import (
    default_workers,
    run_classical_limit,
    run_oracle_compare,
    run_order_parameter,
    run_sample,
    run_trace_distance,
)
from .lattice import LatticeError
from .oracle import OracleDimensionError

COMMANDS = {
    "trace-distance": run_trace_distance,
    "classical-limit": run_classical_limit,
    "order-parameter": run_order_parameter,
    "oracle-compare": run_oracle_compare,
    "sample": run_sample,
}

_HELP = {
    "trace-distance": "tabulate covariance trace distances vs the closed form and 1/m bound",
    "classical-limit": "sweep panel observables in the mass against the classical reference",
    "order-parameter": "periodic-torus order-parameter sweep with monotonicity report",
    "oracle-compare": "z-scores of chain estimates against quadrature ground truth",
    "sample": "run the chains and dump raw states to .npz archives",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopgibbs",
        description="Lattice simulation experiments over loop-valued Gibbs measures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _HELP.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the YAML experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument(
            "--workers",
            type=int,
            default=None,
            help="worker processes (default: available parallelism); results do not depend on it",
        )
        sp.add_argument("--out", default=None, help="output directory (default: config out_dir)")
        if name == "trace-distance":
            sp.add_argument(
                "--exact",
                action="store_true",
                help="report the closed form instead of the truncated series",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        workers = args.workers if args.workers is not None else default_workers()
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        return COMMANDS[args.command](
            config,
            out_dir=args.out,
            workers=workers,
            exact=getattr(args, "exact", False),
        )
    except (ConfigError, LatticeError, OracleDimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
