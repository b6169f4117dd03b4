#!/usr/bin/env python3
"""Run every shipped preset through the command-line tool.

Each preset goes to the subcommand matching its mode; gate presets also get
a gate-time scan and the error-study preset an order scan.  Outputs land in
``<out>/<command>-<preset>``.
"""

import argparse
import sys
import time

from pmcont import cli
from pmcont.preset import load_preset, shipped_presets

COMMAND = {"mitigate": "mitigate", "simulate": "simulate", "direct": "simulate", "restructure": "restructure"}


def jobs(names):
    for name in names:
        preset, _ = load_preset(name)
        yield name, COMMAND[preset.mode]
        if preset.gate_times:
            yield name, "gate"
        if name == "fig8":
            yield name, "errstudy"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="+", help="subset of preset names")
    args = ap.parse_args()
    names = args.only or shipped_presets()
    failed = 0
    for name, cmd in jobs(names):
        t0 = time.perf_counter()
        argv = [cmd, "--preset", name, "--out", f"{args.out}/{cmd}-{name}", "--overwrite", "--workers", str(args.workers)]
        code = cli.main(argv)
        print(f"{cmd:12s} {name:6s} exit {code}  {time.perf_counter() - t0:7.1f} s", file=sys.stderr)
        failed += code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
