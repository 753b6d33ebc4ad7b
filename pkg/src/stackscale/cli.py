"""Command line: ``run``, ``validate`` and ``discover``.

Set ``ELASCALE_LOG`` to a logging level name (``INFO``, ``DEBUG``...) for
more output; the default is ``WARNING``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import config, report, scenario
from .topology import TopologyError, load_topology


def _setup_logging() -> None:
    level = os.environ.get("ELASCALE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def cmd_run(args) -> int:
    status = report.run_scenario(args.scenario, args.seed, args.out)
    if status == report.EXIT_OK:
        print(open(os.path.join(args.out, "summary.txt"), encoding="utf-8").read(), end="")
    return status


def cmd_validate(args) -> int:
    problems = scenario.validate(args.scenario)
    for p in problems:
        print(scenario.describe(p))
    if problems:
        return report.EXIT_SCENARIO
    print("ok")
    return report.EXIT_OK


def cmd_discover(args) -> int:
    try:
        topo = load_topology(args.topology)
    except (TopologyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return report.EXIT_SCENARIO
    for path in config.write_discovered(topo, args.out):
        print(path)
    return report.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stackscale", description="Two-tier autoscaler simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write result files")
    run.add_argument("--scenario", required=True, help="scenario file, directory or bundled name")
    run.add_argument("--seed", required=True, type=int)
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="report policy and topology problems")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=cmd_validate)

    disc = sub.add_parser("discover", help="write default microservice.ini and macroservice.ini")
    disc.add_argument("--topology", required=True)
    disc.add_argument("--out", required=True)
    disc.set_defaults(func=cmd_discover)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run" and args.seed < 0:
        print("error: --seed must be a non-negative integer", file=sys.stderr)
        return report.EXIT_SCENARIO
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
