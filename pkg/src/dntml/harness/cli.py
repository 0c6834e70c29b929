"""``dntml`` command line.

Exit codes: 0 ok, 1 config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError
from .config import config_hash, load_config
from .runner import OUTPUT_ENV, parse_axis, replay, run, sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dntml", description=f"Experiment runner (output root: ${OUTPUT_ENV}).")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one config")
    r.add_argument("config")
    s = sub.add_parser("sweep", help="cross-product sweep over config axes")
    s.add_argument("config")
    s.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2",
                   help="dotted key and values; repeat for more axes")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default=None, help="directory for aggregate.csv")
    v = sub.add_parser("validate", help="check a config and print its hash")
    v.add_argument("config")
    rp = sub.add_parser("replay", help="run the caching pipeline on a recorded trace")
    rp.add_argument("trace")
    rp.add_argument("config")
    return p


def _report(summary) -> int:
    print(f"{summary.pipeline} seed={summary.seed} hash={summary.config_hash[:12]} "
          f"status={summary.status} ({summary.wall_clock:.1f}s)")
    for k in sorted(summary.metrics):
        print(f"  {k}: {summary.metrics[k]:.4f}")
    if summary.status != "ok":
        print(f"  error: {summary.error}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"  artifacts: {summary.artifacts.get('metrics', '')}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            exp = load_config(args.config)
            print(f"ok {exp.pipeline} seed={exp.seed} hash={config_hash(exp)}")
            return EXIT_OK
        if args.command == "run":
            return _report(run(args.config))
        if args.command == "replay":
            return _report(replay(args.trace, args.config))
        try:
            axes = [parse_axis(a) for a in args.axis]
        except ValueError as e:
            raise ConfigError(str(e), "--axis")
        base = load_config(args.config)
        summaries = sweep(base, axes, args.seeds, args.workers, args.out)
        failed = sum(s.status != "ok" for s in summaries)
        print(f"sweep: {len(summaries)} runs, {failed} failed")
        return EXIT_RUNTIME if failed else EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
