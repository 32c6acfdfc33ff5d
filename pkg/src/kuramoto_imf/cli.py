"""Command-line entry point ``kuramoto-imf``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import emit_outputs, load_config, run_command

log = logging.getLogger("kuramoto_imf")

COMMANDS = {
    "nd": "integrate the full network and report spectra",
    "imf": "iterate the stochastic mean field to self-consistency",
    "compare": "run network and mean-field arms and compare spectra",
    "order-sweep": "time-averaged order parameter across a parameter sweep",
    "surrogate-check": "round-trip a target spectrum through the noise generator",
    "kubo-check": "free phase diffusion against the Kubo spectrum",
}


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config, or a meta.json from an earlier run")
    common.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--plot", action="store_true", help="also write SVG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kuramoto-imf", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        sub.add_parser(name, help=text, description=text, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("--threads must be at least 1")
        return 2
    try:
        config = load_config(args.config) if args.config else {}
        result, resolved = run_command(
            args.command, config, seed=args.seed, threads=args.threads,
            progress=lambda it, d: log.info("iteration %d: distance %.4g", it, d))
        paths = emit_outputs(result, args.out, args.command, resolved, plot=args.plot)
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
