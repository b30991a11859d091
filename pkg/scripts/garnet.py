"""GARNET(20,5,10) learning curves for RMC-LR (both score weightings) and actor-critic.

    python3 scripts/garnet.py [--out-dir runs] [--workers N]
"""
import argparse
import math

import numpy as np

from _common import describe, final_rows, read_csv, run
from renewal_rl.baselines import value_iteration
from renewal_rl.envs import garnet_generate


def samples_to(rows, level):
    for r in rows:
        if r["J_eval"] >= level:
            return r["samples"]
    return math.inf


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--workers", default="1")
    args = ap.parse_args()
    run("garnet.ini", args.out_dir, "--workers", args.workers)

    J_star = value_iteration(garnet_generate(20, 5, 10, 0.05, seed=0), 0.9).J_star
    print(f"optimal J* = {J_star:.6g}")
    for name in ("garnet_rmc_lr", "garnet_rmc_lr_biased", "garnet_sarsa"):
        path = f"{args.out_dir}/{name}/iterations.csv"
        describe(f"{name} final J/J*", [r["J_eval"] / J_star for r in final_rows(path)])
        if name != "garnet_sarsa":
            reps = {}
            for r in read_csv(path):
                reps.setdefault(r["replication"], []).append(r)
            hits = [samples_to(v, 0.9 * J_star) for v in reps.values()]
            print(f"  median samples to 90% of J*: {np.median(hits):.0f}")


if __name__ == "__main__":
    main()
