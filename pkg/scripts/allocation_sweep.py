"""Mean allocation delay versus concurrent requests, one curve per parked-car count."""

import argparse
import csv
import json
import sys

import numpy as np

from vecsim.experiments import allocation_once
from vecsim.kernel import LatencyModel
from vecsim.simulation import bundled_latency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--requests", default="50,100,200,300")
    ap.add_argument("--cars", default="20,50,100")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--latency", help="latency model JSON (default: bundled calibration)")
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    lat = LatencyModel.from_dict(json.load(open(args.latency))) if args.latency else bundled_latency()
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["cars", "requests", "delay_ms", "delay_std_ms"])
    for cars in (int(c) for c in args.cars.split(",")):
        for n in (int(r) for r in args.requests.split(",")):
            vals = np.array([allocation_once(n, cars, lat, seed) for seed in range(args.seeds)]) / 1e3
            w.writerow([cars, n, f"{vals.mean():.3f}", f"{vals.std():.3f}"])


if __name__ == "__main__":
    main()
