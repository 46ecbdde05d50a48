"""Regenerate the synthetic profiles and calibrated latency model shipped in src/vecsim/data.

The garage and Wi-Fi activity curves are synthetic stand-ins shaped like a
city-centre garage (commuter morning peak, shoppers in the afternoon,
overnight residents) and a municipal Wi-Fi network.
"""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

from vecsim.metrics import calibrate_latency

DATA = Path(__file__).resolve().parents[1] / "src" / "vecsim" / "data"

VEHICLE_RATES = [
    12, 11, 10, 10, 11, 13, 15, 18, 20, 20, 20, 19,
    18, 18, 18, 18, 18, 19, 19, 18, 16, 15, 14, 13,
]
# mean stay (hours) for a vehicle entering at each hour of the day
STAY_HOURS = [
    3.0, 3.0, 3.0, 3.0, 3.2, 3.8, 4.5, 5.0, 4.5, 3.5, 2.8, 2.5,
    2.4, 2.4, 2.4, 2.4, 2.4, 2.5, 2.6, 2.8, 3.0, 3.0, 3.0, 3.0,
]
STAY_CV = 0.5
USER_RATES = [
    34, 30, 28, 26, 26, 28, 32, 38, 44, 48, 50, 50,
    50, 48, 46, 45, 46, 48, 50, 50, 48, 44, 40, 36,
]


def residency_bins(bin_minutes=10):
    nb = 24 * 60 // bin_minutes
    hours = np.arange(nb) * bin_minutes / 60 + bin_minutes / 120
    ext = np.array(STAY_HOURS + STAY_HOURS[:1])
    means = np.interp(hours, np.arange(25) + 0.5 - 0.5, ext) * 3600
    n = [int(round(VEHICLE_RATES[int(h)] * bin_minutes / 60 * 30)) for h in hours]
    return [{"mean_s": round(float(m), 1), "std_s": round(float(m * STAY_CV), 1), "n": k} for m, k in zip(means, n)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--skip-calibration", action="store_true")
    args = ap.parse_args()
    profile = {"vehicle_rates": VEHICLE_RATES, "residency": {"bin_minutes": 10, "bins": residency_bins()}}
    (DATA / "parking_profile.json").write_text(json.dumps(profile, indent=1) + "\n")
    with open(DATA / "user_activity.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "avg_sessions"])
        for h, r in enumerate(USER_RATES):
            w.writerow([h, r])
    if not args.skip_calibration:
        model = calibrate_latency()
        (DATA / "calibrated_latency.json").write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
