"""``critwin`` command line: one subcommand per experiment.

    critwin <subcommand> --config FILE [--seed-offset N] [--out PREFIX] [--threads N]

Writes ``PREFIX.csv`` (deterministic results) and ``PREFIX.json`` (config
echo, content hash, wall time). ``verify`` also prints its pass/fail table
and exits non-zero if any check fails.
"""

from __future__ import annotations

import argparse
import contextlib
import sys
import time

from .config import HEADER, ConfigError, load_config, parse_config
from .experiments import RUNNERS
from .output import write_csv, write_summary

SUBCOMMANDS = ("gen", "window-scan", "tail", "susceptibility", "local-limit", "coupling-audit",
               "verify")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critwin", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "verify",
                        help="critwin-config v1 file (optional for verify)")
        sp.add_argument("--seed-offset", type=int, default=0,
                        help="added to every seed in the config")
        sp.add_argument("--out", default=None, help="output path prefix (overrides config)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        if name == "verify":
            sp.add_argument("--mutate-si", type=float, default=None, metavar="FACTOR",
                            help="scale Si by FACTOR (mutation test; expect failures)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    exp = args.command.replace("-", "_")
    try:
        if args.config is None:
            config = parse_config(f"{HEADER}\nexperiment = {exp}\nseeds = 1\n")
        else:
            config = load_config(args.config, exp)
        config = config.with_seed_offset(args.seed_offset)
    except (ConfigError, OSError) as exc:
        print(f"critwin: {exc}", file=sys.stderr)
        return 2
    prefix = args.out or config.output
    t0 = time.time()
    ctx = contextlib.nullcontext()
    if exp == "verify" and args.mutate_si is not None:
        from .verify import mutated_si
        ctx = mutated_si(args.mutate_si)
    with ctx:
        if exp == "gen":
            result = RUNNERS[exp](config, args.threads, prefix)
        else:
            result = RUNNERS[exp](config, args.threads)
    wall = time.time() - t0
    write_csv(result.rows, prefix + ".csv")
    write_summary(prefix + ".json", config=config, rows=result.rows, wall_time=wall,
                  partial=result.partial, extra=result.extra)
    if exp == "verify":
        from .verify import Check, format_table
        print(format_table([Check(c["statistic"], c["estimate"], c["reference"], c["passed"])
                            for c in result.extra["checks"]]))
        return 0 if all(r.passed for r in result.rows) else 1
    print(f"critwin {args.command}: {len(result.rows)} rows -> {prefix}.csv "
          f"({wall:.1f} s{', PARTIAL' if result.partial else ''})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
