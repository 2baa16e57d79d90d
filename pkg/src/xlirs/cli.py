"""Command-line entry point.

Subcommands: `run` (full Monte-Carlo experiment), `overhead` (closed-form
pilot-overhead table, no simulation), `dump-channel` (one realization as
text). Output directory resolution order: --output flag, XLIRS_OUTPUT_DIR
environment variable, config value. Exit codes: 0 success, 2 config
problem, 1 hard numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .estimation import EstimationError
from .runner import (ConfigError, dump_channel, emit_results, load_config,
                     overhead_table, resolve_output_dir, run_experiment)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="xlirs",
        description="Anchor-assisted IRS channel estimation experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, desc in [("run", "run the configured Monte-Carlo experiment"),
                       ("overhead", "print the closed-form overhead table"),
                       ("dump-channel", "write one channel realization")]:
        sp = sub.add_parser(name, help=desc)
        sp.add_argument("config", help="YAML experiment config")
        sp.add_argument("-o", "--output", default=None,
                        help="output directory (overrides config and env)")
        sp.add_argument("-q", "--quiet", action="store_true",
                        help="suppress progress output")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.output) if args.output else resolve_output_dir(config)
    try:
        if args.command == "run":
            records = run_experiment(config, progress=not args.quiet)
            paths = emit_results(records, out_dir, config)
            flagged = sum(1 for r in records if r.flags)
            print(f"{len(records)} rows -> {paths['details']}"
                  + (f" ({flagged} flagged)" if flagged else ""))
        elif args.command == "overhead":
            table = overhead_table(config)
            print(table, end="")
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "overhead.txt").write_text(table)
        else:
            path = dump_channel(config, out_dir)
            print(f"wrote {path}")
    except (EstimationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
