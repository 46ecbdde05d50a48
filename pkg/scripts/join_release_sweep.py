"""Mean join and release time versus the number of vehicles joining at once."""

import argparse
import csv
import json
import sys

import numpy as np

from vecsim.experiments import join_release_once
from vecsim.kernel import LatencyModel
from vecsim.simulation import bundled_latency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--counts", default="1,2,5,10,20,30,40,50")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--latency", help="latency model JSON (default: bundled calibration)")
    ap.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    args = ap.parse_args()
    lat = LatencyModel.from_dict(json.load(open(args.latency))) if args.latency else bundled_latency()
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["vehicles", "join_ms", "join_std_ms", "release_ms", "release_std_ms"])
    for n in (int(c) for c in args.counts.split(",")):
        joins, rels = zip(*(join_release_once(n, lat, seed)[:2] for seed in range(args.seeds)))
        w.writerow([n, f"{np.mean(joins) / 1e3:.3f}", f"{np.std(joins) / 1e3:.3f}",
                    f"{np.mean(rels) / 1e3:.3f}", f"{np.std(rels) / 1e3:.3f}"])


if __name__ == "__main__":
    main()
