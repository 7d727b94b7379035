"""Command-line entry point.

Subcommands mirror the experiment kinds plus ``compare``:

    oscillon simulate --config configs/simulate.cfg --out runs/sim --seed 1
    oscillon compare runs/a/manifest.json runs/b/manifest.json

Exit codes: 0 pass, 1 estimate-check failure, 2 configuration error,
3 numerical instability.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .harness import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK, compare, run


def _add_run_parser(sub, name: str):
    p = sub.add_parser(name, help=f"run the {name} experiment")
    p.add_argument("--config", required=True, help="path to the config file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config entry")
    return p


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="oscillon",
        description="pseudo-spectral damped-wave experiments and checks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_run_parser(sub, name)
    pc = sub.add_parser("compare", help="diff the scalar outcomes of two runs")
    pc.add_argument("manifest_a")
    pc.add_argument("manifest_b")
    pc.add_argument("--tol", type=float, default=1e-9,
                    help="relative drift tolerance")

    args = parser.parse_args(argv)

    if args.command == "compare":
        try:
            diff = compare(args.manifest_a, args.manifest_b, rel_tol=args.tol)
        except (ConfigError, FileNotFoundError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(diff, indent=2, sort_keys=True))
        return EXIT_OK if diff["identical"] else EXIT_CHECK_FAILED

    try:
        cfg = ExperimentConfig.load(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.values["experiment"] = args.command
    try:
        for ov in args.override:
            cfg.override(ov)
        out = args.out or cfg.get_str("output.dir", f"runs/{args.command}")
        code = run(cfg, out, seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_OK:
        print(f"{args.command}: all checks passed ({out})")
    elif code == EXIT_CHECK_FAILED:
        print(f"{args.command}: estimate check FAILED ({out})", file=sys.stderr)
    else:
        print(f"{args.command}: numerical instability ({out})", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
