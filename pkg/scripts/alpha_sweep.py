#!/usr/bin/env python3
"""Train one model per alpha in the grid on a generated benchmark and print the table."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from hlsrank import cli


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=Path("runs/alpha_sweep"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    args = p.parse_args(argv)

    common = ["--seed", str(args.seed), "--set", f"train.epochs={args.epochs}"]
    code = cli.run(["gen", "--out", str(args.out / "data")] + common)
    if code == 0:
        code = cli.run(["sweep-alpha", "--data", str(args.out / "data"), "--out", str(args.out / "sweep"), "-v"]
                       + common)
    if code == 0:
        print((args.out / "sweep" / "alpha_sweep.csv").read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
