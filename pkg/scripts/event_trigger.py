"""Event-triggered communication: learned thresholds for p_d in {0, 0.1, 0.2}.

Compares the learned thresholds with a grid search and the quadrature value.
Takes a few minutes on one core.
"""
import argparse

import numpy as np

from _common import CONFIGS, describe, final_rows, run
from renewal_rl.baselines import event_trigger_value
from renewal_rl.cli import main as cli_main, read_csv
from renewal_rl.envs import EventTriggerModel


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--workers", default="1")
    args = ap.parse_args()
    run("event_trigger.ini", args.out_dir, "--workers", args.workers)
    cli_main(["oracle", str(CONFIGS / "event_trigger_oracle.ini"), "--out-dir", args.out_dir])

    for name, p_d in (("event_pd0", 0.0), ("event_pd01", 0.1), ("event_pd02", 0.2)):
        thetas = [r["theta_0"] for r in final_rows(f"{args.out_dir}/{name}/iterations.csv")]
        describe(f"{name} final theta", thetas)
        model = EventTriggerModel(p_d=p_d)
        grid = np.arange(0.0, 20.0001, 0.05)
        vals = [event_trigger_value(t, model) for t in grid]
        best = int(np.argmax(vals))
        print(f"  quadrature optimum theta {grid[best]:.2f}  J {vals[best]:.4f}; "
              f"J at median learned theta {event_trigger_value(np.median(thetas), model):.4f}")
    for r in read_csv(f"{args.out_dir}/event_grid_pd0/oracle.csv"):
        print("grid search (p_d=0):", {k: v for k, v in r.items() if k != "experiment"})


if __name__ == "__main__":
    main()
