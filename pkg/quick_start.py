#!/usr/bin/env python3
"""
Quick Start Script
Runs every stage on one configuration, by default the bundled synthetic day
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Union

from config import load_config
from errors import ConfigError
from pipeline import SUBCOMMANDS, run_pipeline

logger = logging.getLogger(__name__)

BUNDLED_CONFIG = Path(__file__).resolve().parent / "config" / "bundled.json"


def run_all(config_path: Union[str, Path] = BUNDLED_CONFIG, seed: Optional[int] = None,
            out: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """Run forecast, schedule, simulate and report in order

    Args:
        config_path (Union[str, Path]): Run configuration
        seed (Optional[int]): Seed override
        out (Optional[Union[str, Path]]): Output directory override

    Returns:
        Dict[str, Any]: Per-stage results and the exit code of the first failure (0 if none)
    """
    try:
        config = load_config(config_path, seed=seed, output_dir=out)
    except ConfigError as e:
        logger.error(f"Configuration error: {str(e)}")
        return {"error": str(e), "exit_code": e.exit_code, "stages": {}}

    stages = {}
    for subcommand in SUBCOMMANDS:
        result = run_pipeline(config, subcommand)
        stages[subcommand] = result
        if result["exit_code"] != 0:
            return {"error": result["error"], "exit_code": result["exit_code"], "stages": stages}
    return {"exit_code": 0, "stages": stages}


def main():
    parser = argparse.ArgumentParser(description="Quick Start for the battery toolkit")
    parser.add_argument("--config", default=str(BUNDLED_CONFIG), help="Run configuration (default: bundled day)")
    parser.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    parser.add_argument("--out", default=None, help="Override the output directory")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    print("🔋 Running forecast → schedule → simulate → report...")
    result = run_all(args.config, args.seed, args.out)
    if result["exit_code"] != 0:
        print(f"❌ {result['error']}")
    else:
        print(f"✅ Report: {result['stages']['report']['files']['report']}")
    sys.exit(result["exit_code"])


if __name__ == "__main__":
    main()
