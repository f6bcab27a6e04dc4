"""Command line: ``turblab <kind> run <config>``, ``turblab sweep`` and ``turblab accept``.

Exit codes: 0 success, 2 configuration error, 3 solver abort, 4 acceptance failure.
"""

import argparse
import json
import sys
from pathlib import Path

from .config import KINDS, load_config
from .errors import ConfigError, TurblabError
from .runner import EXIT_ABORT, EXIT_ACCEPT, EXIT_CONFIG, EXIT_OK, output_root, parse_axis, run, sweep


def _parser():
    p = argparse.ArgumentParser(prog="turblab", description="Turbulence and combustion numerical laboratory.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        k = sub.add_parser(kind, help=f"{kind} experiments")
        ks = k.add_subparsers(dest="action", required=True)
        r = ks.add_parser("run", help="run one config")
        r.add_argument("config")
        r.add_argument("--out", help="output directory (default $TURBLAB_OUT/<kind>_<hash>)")
    s = sub.add_parser("sweep", help="run a config over a parameter axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True, help="dotted.key=v1,v2,...")
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=None)
    a = sub.add_parser("accept", help="run an acceptance suite")
    a.add_argument("suite", choices=("combustion", "convection", "euler", "spectra", "kernel", "all"))
    a.add_argument("--out")
    a.add_argument("--tol", action="append", default=[], help="override: ID.name=value, e.g. 1.rel=0.01")
    return p


def _tolerance_overrides(items):
    out = {}
    for item in items:
        try:
            key, value = item.split("=", 1)
            cid, name = key.split(".", 1)
            out.setdefault(int(cid), {})[name] = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad tolerance override {item!r}; expected ID.name=value") from exc
    return out


def _kind_mismatch(cfg, kind):
    if cfg.kind != kind:
        raise ConfigError(f"config is of kind {cfg.kind!r}, not {kind!r}", key="kind")


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "accept":
            from .acceptance import run_acceptance

            overrides = _tolerance_overrides(args.tol)
            out = Path(args.out) if args.out else output_root() / f"accept_{args.suite}"
            results = run_acceptance(args.suite, overrides, out, echo=print)
            return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPT
        cfg = load_config(args.config)
        if args.command == "sweep":
            key, values = parse_axis(args.axis)
            rows, failures = sweep(cfg.data, key, values, args.out, args.workers)
            for f in failures:
                print(f"failed: {key}={f[0]} status {f[1]}: {f[2]}", file=sys.stderr)
            print(f"{len(rows)} runs merged, {len(failures)} failed")
            return EXIT_OK if not failures else EXIT_ABORT
        _kind_mismatch(cfg, args.command)
        report = run(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TurblabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    if report.status == EXIT_OK:
        print(json.dumps({"outdir": str(report.outdir), **report.summary}, default=float))
    else:
        print(report.message, file=sys.stderr)
        if report.checkpoint:
            print(f"last good checkpoint: {report.checkpoint}", file=sys.stderr)
    return report.status


if __name__ == "__main__":
    sys.exit(main())
