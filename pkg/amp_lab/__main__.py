"""
Command line interface: `python -m amp_lab <experiment> [flags]`.
"""

import argparse
import logging
import sys

from . import __version__
from .errors import LabError
from .harness import DEFAULTS, EXPERIMENTS, emit_report, load_config, run_experiment


logger = logging.getLogger("amp_lab")

# flag name -> config key
FLAGS = {
    "m": "m",
    "n": "n",
    "eps": "eps",
    "delta": "delta",
    "trials": "trials",
    "lambda": "lambda",
    "t": "t",
    "seed": "seed",
    "instance": "instance",
    "out": "out",
    "format": "format",
    "workers": "workers",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="amp_lab", description="Run a seeded experiment and write its report."
    )
    parser.add_argument("--version", action="version", version=f"amp_lab {__version__}")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment")
    sub.required = True
    for name in EXPERIMENTS:
        keys = ", ".join(sorted(DEFAULTS[name]))
        p = sub.add_parser(name, help=f"parameters: {keys}")
        for flag in FLAGS:
            p.add_argument(f"--{flag}", dest=f"flag_{flag}", default=None)
        p.add_argument("--config", default=None, help="flat key = value file")
        p.add_argument(
            "-p",
            "--param",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="any other experiment parameter",
        )
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")

    flags = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"amp_lab: expected KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        flags[key.strip()] = value
    for flag, key in FLAGS.items():
        value = getattr(args, f"flag_{flag}")
        if value is not None:
            flags[key] = value

    try:
        cfg = load_config(args.experiment, flags, args.config)
        report = run_experiment(cfg)
        text = emit_report(report, cfg.format, cfg.out or None)
    except LabError as err:
        logger.error("%s", err)
        return 2
    if not cfg.out:
        sys.stdout.write(text)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
