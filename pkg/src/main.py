# src/main.py
import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from src.errors import FracdriftError
from src.nodes import PRESETS
from src.utils.config_utils import load_config, validate_config
from src.workflow import LOG_FORMAT, run_preset

load_dotenv()

# ---------------------------------------------------------
# Initialize Logging
# ---------------------------------------------------------
logging.basicConfig(level=os.getenv("FRACDRIFT_LOG_LEVEL", "INFO").upper(), format=LOG_FORMAT)
logger = logging.getLogger("fracdrift")

EXIT_OK = 0
EXIT_CRITERIA_FAILED = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracdrift",
        description="Pseudo-spectral fractional transport / SQG simulator and verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the preset named in a TOML config (simulate when unset)")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: <output.directory>/<preset>)")

    preset = sub.add_parser("preset", help="run a named experiment preset")
    preset.add_argument("name", choices=sorted(PRESETS))
    preset.add_argument("--out")
    preset.add_argument("--n", type=int, help="points per axis")
    preset.add_argument("--alpha", type=float)
    preset.add_argument("--dt", type=float)
    preset.add_argument("--t-end", dest="t_end", type=float)
    preset.add_argument("--config", help="TOML file layered over the preset defaults")

    validate = sub.add_parser("validate", help="check a TOML config without running it")
    validate.add_argument("config")
    return parser


def _report(state) -> int:
    failed = state.get("failed", [])
    logger.info(f"artifacts in {state['out_dir']}")
    if failed:
        for name in failed:
            logger.error(f"criterion failed: {name}")
        return EXIT_CRITERIA_FAILED
    logger.info("all criteria passed")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            ok, msg = validate_config(args.config)
            (logger.info if ok else logger.error)(msg)
            return EXIT_OK if ok else EXIT_ERROR

        if args.command == "run":
            config = load_config(args.config)
            state = run_preset(config.preset or "simulate", config, {"out": args.out})
            return _report(state)

        config = load_config(args.config) if args.config else None
        overrides = {"n": args.n, "alpha": args.alpha, "dt": args.dt, "t_end": args.t_end, "out": args.out}
        return _report(run_preset(args.name, config, overrides))
    except FracdriftError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
