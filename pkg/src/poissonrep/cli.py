"""Command line front end: ``poissonrep <command> [--config PATH] [--seed N] ...``."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .intensity import SpecError

_KIND_COMMANDS = ("sample", "oracle", "dominate", "code-pairs", "code-general", "censored", "markov")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poissonrep", description="Poisson-representable random sets on Z and Z^2.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--spec", help="bundled spec name or spec JSON path (overrides the config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicas", type=int)
        p.add_argument("--out", help="output directory for CSV tables and manifest.json")

    for name in _KIND_COMMANDS:
        common(sub.add_parser(name, help=f"run a {name} experiment"))
    sc = sub.add_parser("scenario", help="run a bundled scenario")
    sc.add_argument("name")
    common(sc)
    sub.add_parser("list", help="list bundled scenarios and specs")
    return ap


def _load(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise harness.ConfigError(f"cannot read config {path}: {exc}") from exc


def _summary(status, res, out):
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
    if out:
        print(f"wrote {out}")
    for name, (header, rows) in sorted(res.tables.items()):
        if len(rows) <= 12:
            print(f"[{name}] " + ",".join(header))
            for r in rows:
                print("  " + ",".join(str(harness._fmt(x)) for x in r))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, anchor in harness.list_scenarios():
                print(f"{name:24s} {anchor}")
            print()
            print("bundled specs: " + ", ".join(sorted(harness.BUNDLED)))
            return harness.EXIT_OK
        over = {"seed": args.seed, "replicas": args.replicas, "spec": args.spec, "out": args.out}
        if args.command == "scenario":
            cfg = harness.scenario_config(args.name, **over)
        else:
            obj = _load(args.config)
            obj.setdefault("kind", args.command)
            if obj["kind"] != args.command:
                raise harness.ConfigError(f"config kind {obj['kind']!r} does not match command {args.command!r}")
            obj.setdefault("seed", 0)
            obj.setdefault("replicas", 1000)
            cfg = harness.make_config(obj, **over)
        status, res = harness.run(cfg)
        _summary(status, res, cfg.out)
        return status
    except (harness.ConfigError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    except AssertionError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return harness.EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
