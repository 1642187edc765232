"""Command-line front end: one subcommand per scenario.

Example::

    qdcavity rabi_scan --config scan.json --out rabi.csv --workers 4
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import SCENARIOS, ConfigError, ScenarioConfig, ScenarioError, run
from .fitting import FitError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdcavity", description="QD-micropillar simulations.")
    sub = parser.add_subparsers(dest="scenario", metavar="SCENARIO", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", help="JSON config document; CLI flags override its top-level keys")
        p.add_argument("--out", help="output path (default <scenario>.<format>)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--seed", type=int, help="seed for fit multi-starts and synthetic noise")
    return parser


def load_config(args: argparse.Namespace) -> ScenarioConfig:
    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
    if data.get("scenario", args.scenario) != args.scenario:
        raise ConfigError(f"scenario: config says {data['scenario']!r}, command line says {args.scenario!r}")
    data["scenario"] = args.scenario
    if args.workers is not None:
        data["workers"] = args.workers
    if args.seed is not None:
        data["seed"] = args.seed
    output = dict(data.get("output", {}))
    if args.out:
        output["path"] = args.out
    if args.format:
        output["format"] = args.format
    data["output"] = output
    return ScenarioConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    try:
        status = run(config)
    except (ScenarioError, FitError, ConfigError) as exc:
        print(f"qdcavity {config.scenario}: {exc}", file=sys.stderr)
        return 1
    out = config.output.get("path") or f"{config.scenario}.{config.output.get('format', 'csv')}"
    print(f"wrote {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
