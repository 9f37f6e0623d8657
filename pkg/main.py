#!/usr/bin/env python3
"""
Behind-the-meter battery toolkit
Day-ahead stochastic scheduling, 30-second tracking control and a plant
simulator for a battery that shaves peaks and sells aFRR power.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config import load_config
from errors import ConfigError
from pipeline import SUBCOMMANDS, run_pipeline

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout),
    ]
)

logger = logging.getLogger(__name__)

LOG_FILE = "battery_toolkit.log"


def attach_log_file(out_dir: Path) -> logging.Handler:
    """Mirror the root logger into ``<out>/battery_toolkit.log``"""
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out_dir / LOG_FILE, encoding="utf-8")
    handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
    logging.getLogger().addHandler(handler)
    return handler


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Behind-the-meter battery scheduling and control toolkit")
    parser.add_argument(
        "subcommand",
        choices=SUBCOMMANDS,
        help="Stage to run: forecast, schedule, simulate or report"
    )
    parser.add_argument(
        "--config",
        required=True,
        help="Path to the JSON run configuration"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Override the configured random seed"
    )
    parser.add_argument(
        "--out",
        default=None,
        help="Override the configured output directory"
    )
    parser.add_argument(
        "--debug",
        action="store_true",
        help="Enable debug logging"
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ConfigError.exit_code if e.code else 0

    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        config = load_config(args.config, seed=args.seed, output_dir=args.out)
    except ConfigError as e:
        logger.error(f"❌ Configuration error: {str(e)}")
        return e.exit_code

    handler = attach_log_file(config.output_dir)
    try:
        logger.info(f"🚀 Running {args.subcommand} with {args.config}")
        result = run_pipeline(config, args.subcommand)
        if "error" in result:
            print(f"❌ {args.subcommand} failed: {result['error']}")
        else:
            for name, path in result["files"].items():
                print(f"{name}: {path}")
        return result["exit_code"]
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
