#!/usr/bin/env python3
"""
Command line for the Euler-Coriolis toolkit

    python main.py <command> [--config RUN_FILE] [--out DIR] [--seed N] [--threads N] [--strict]

Commands: lindecay, projcheck, vfcheck, simulate, norms, oracle-xcheck.
Exit codes: 0 pass, 1 assertion failure, 2 configuration error, 3 numerical abort.
"""

import argparse
import sys
from datetime import datetime
from pathlib import Path

from loguru import logger

from src.config import Config
from src.exceptions import ConfigurationError
from src.harness import COMMANDS, EXIT_CONFIG, execute
from src.utils.helpers import check_dependencies, setup_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Axisymmetric Euler-Coriolis simulation and verification toolkit")
    parser.add_argument("command", choices=sorted(COMMANDS), help="Experiment to run")
    parser.add_argument("path", nargs="?", help="Field dump for the norms command")
    parser.add_argument("--config", type=Path, help="KEY=value run file")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    parser.add_argument("--strict", action="store_true", help="Treat warnings as failures")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Config.from_file(args.config) if args.config else Config()
        setup_logging(settings.LOG_LEVEL, settings.LOGS_DIR)
        settings.validate_config()
    except ConfigurationError as e:
        setup_logging()
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_CONFIG

    if not check_dependencies():
        return EXIT_CONFIG

    seed = settings.SEED if args.seed is None else args.seed
    threads = settings.THREADS if args.threads is None else args.threads
    strict = args.strict or settings.STRICT
    out_dir = args.out or settings.OUTPUT_DIR / f"{args.command}_{datetime.now():%Y%m%d_%H%M%S}"

    logger.info(f"🚀 {args.command} (seed={seed}, threads={threads}, strict={strict}) -> {out_dir}")
    try:
        return execute(args.command, settings, out_dir, seed, threads, strict, args.path)
    except ConfigurationError as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
