"""Hourly migrations for each scheduler on the bundled 24 h scenario, averaged over seeds."""

import argparse
import csv
import sys

import numpy as np

from vecsim.experiments import compare_schedulers
from vecsim.scheduling import SCHEDULER_NAMES
from vecsim.workload import ScenarioConfig, bundled_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="scenario JSON (default: bundled demo)")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    cfg = ScenarioConfig.load(args.config) if args.config else bundled_config()
    runs = compare_schedulers(cfg, SCHEDULER_NAMES, list(range(args.seeds)), args.workers)
    hourly = {n: np.array([m.migrations_per_hour for m in rs], dtype=float) for n, rs in runs.items()}
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["hour", *SCHEDULER_NAMES])
    for h in range(24):
        w.writerow([h, *(f"{hourly[n][:, h].mean():.2f}" for n in SCHEDULER_NAMES)])
    for n in SCHEDULER_NAMES:
        mean = hourly[n].mean(axis=0)
        totals = hourly[n].sum(axis=1)
        print(f"{n:12s} total {totals.mean():7.1f} +- {totals.std():5.1f}  peak {mean.max():5.1f} at {int(mean.argmax()):2d}h"
              f"  std/mean {mean.std() / mean.mean():.2f}", file=sys.stderr)


if __name__ == "__main__":
    main()
