#!/usr/bin/env python3
"""Two-stage DSE against random-K2 and stage-1-only baselines over several seeded kernels.

Trains on every kernel (transductive: all designs are visible, labels of the
test split are never used for the DSE), then reports best true latency per
kernel and the geometric-mean ratios.
"""

from __future__ import annotations

import argparse
import time

from hlsrank import evaluation as ev
from hlsrank.surrogate import BenchmarkSpec
from hlsrank.trainer import TrainConfig, fit


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kernels", type=int, default=10)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--k1", type=int, default=100)
    p.add_argument("--k2", type=int, default=10)
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    bench = BenchmarkSpec.seeded(args.seed, args.kernels, "small", args.samples)
    t0 = time.perf_counter()
    ck = fit(bench.build(), TrainConfig(epochs=args.epochs, seed=args.seed))
    print(f"trained {args.epochs} epochs in {time.perf_counter() - t0:.0f}s")
    model = ck.model()
    rows = []
    print(f"{'kernel':>10} {'two_stage':>12} {'stage1_only':>12} {'random':>12}")
    for template, oracle in bench.kernels():
        row, _, _ = ev.dse_comparison(template, oracle, model, args.k1, args.k2, args.budget, 512, args.seed)
        rows.append(row)
        print(f"{row.kernel_id:>10} {row.two_stage:12.1f} {row.stage1_only:12.1f} {row.random:12.1f}")
    two = ev.geomean([r.two_stage for r in rows])
    print(f"two-stage / random      = {two / ev.geomean([r.random for r in rows]):.3f}")
    print(f"two-stage / stage1-only = {two / ev.geomean([r.stage1_only for r in rows]):.3f}")


if __name__ == "__main__":
    main()
