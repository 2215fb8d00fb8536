import argparse
import sys

from affine_fence.commands import bench, demo, enforce, train, verify
from affine_fence.commands.handlers import EXIT_USAGE_ERROR, handle_exception
from affine_fence.core.config import config
from affine_fence.core.logger import logger

COMMANDS = (train, enforce, verify, bench, demo)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affine-fence",
        description=(
            "Train and repair ReLU networks so that each constrained input region "
            "gets its own activation pattern and an affine response."
        ),
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Master seed (default: AFFINE_FENCE_SEED or 0).",
    )
    parser.add_argument(
        "--jobs", type=int, default=None, help="Worker threads for per-neuron programs."
    )
    parser.add_argument("--log-level", default=None, help="stderr log level.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE_ERROR if exc.code else 0

    if args.log_level is not None:
        try:
            logger.set_level(args.log_level)
        except ValueError:
            logger.error(f"Unknown log level {args.log_level}")
            return EXIT_USAGE_ERROR
    if args.seed is None:
        args.seed = config.seed
    if args.jobs is not None and args.jobs < 1:
        logger.error(f"--jobs must be at least 1, got {args.jobs}")
        return EXIT_USAGE_ERROR

    try:
        return args.handler(args)
    except Exception as exc:
        return handle_exception(exc)


if __name__ == "__main__":
    sys.exit(main())
