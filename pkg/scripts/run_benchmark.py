#!/usr/bin/env python3
"""Generate the calibration benchmark, train at desk defaults and write the full report.

Equivalent to running ``hlsrank gen``, ``train`` and ``report`` in sequence
under one output root. Extra ``--set`` overrides are passed to every step.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from hlsrank import cli


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/benchmark"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--no-dse", action="store_true", help="skip the DSE comparison in the report")
    args = p.parse_args(argv)

    common = ["--seed", str(args.seed)] + [x for o in args.overrides for x in ("--set", o)]
    data, train, report = args.out / "data", args.out / "train", args.out / "report"
    ck = train / "checkpoint.json"
    steps = [
        ["gen", "--out", str(data)],
        ["train", "--data", str(data), "--out", str(train), "-v"],
        ["report", "--data", str(data), "--checkpoint", str(ck), "--out", str(report)]
        + (["--no-dse"] if args.no_dse else []),
    ]
    for step in steps:
        code = cli.run(step + common)
        if code:
            return code
    print((report / "metrics.csv").read_text(), end="")
    if not args.no_dse:
        print((report / "dse_latency.csv").read_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
