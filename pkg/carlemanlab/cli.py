"""
Command line entry point: ``carlemanlab run|list|validate``.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from .exceptions import ConfigError
from .experiment import ExperimentConfig, compare_golden, list_experiments, load_document, load_golden, run, validate

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carlemanlab",
                                     description="Carleman estimates and stability experiments for the "
                                                 "linearized Navier-Stokes system.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug output")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run one experiment")
    run_parser.add_argument("experiment", nargs="?", help="experiment name, overrides the config")
    run_parser.add_argument("--config", help="JSON config file")
    run_parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                            help="override one config key, repeatable")
    run_parser.add_argument("--out", help="output root directory")
    run_parser.add_argument("--golden", help="golden summary JSON; a run that differs from it exits with 1")

    commands.add_parser("list", help="print the experiment catalog as JSON")

    validate_parser = commands.add_parser("validate", help="check a config without running it")
    validate_parser.add_argument("--config", help="JSON config file")
    validate_parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return parser


def _configure_logging(verbosity: int):
    level = logging.WARNING if verbosity == 0 else (logging.INFO if verbosity == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    """
    :return: Exit status, 0 on success, 2 when only soft flags failed, 1 on failure or invalid config
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)

    if args.command == "list":
        print(json.dumps(list_experiments(), indent=2))
        return 0

    try:
        document = load_document(args.config, args.overrides)
        if args.command == "validate":
            report = validate(document)
            print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
            return 0 if report.valid else 1
        if args.experiment:
            document["experiment"] = args.experiment
        config = ExperimentConfig.from_dict(document)
    except ConfigError as e:
        print("invalid configuration: {}".format(", ".join(e.keys) or e), file=sys.stderr)
        return 1
    except OSError as e:
        print("cannot read configuration: {}".format(e), file=sys.stderr)
        return 1

    golden = None
    if args.golden:
        try:
            golden = load_golden(args.golden)
        except (ConfigError, OSError) as e:
            print("cannot read golden summary: {}".format(e), file=sys.stderr)
            return 1

    outcome = run(config, out_dir=args.out)
    status = outcome.status
    report = {"experiment": config.experiment, "status": status, "directory": str(outcome.directory)}
    if golden is not None:
        mismatches = compare_golden(outcome.summary, golden)
        for line in mismatches:
            print("golden mismatch: {}".format(line), file=sys.stderr)
        report["golden_mismatches"] = len(mismatches)
        if mismatches:
            status = 1
    print(json.dumps(report))
    return status
