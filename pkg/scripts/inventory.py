"""Inventory control: SPSA on the base-stock level vs the closed-form optimum."""
import argparse

from _common import describe, final_rows, run
from renewal_rl.envs import InventoryModel, inventory_optimal_threshold, inventory_value


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--workers", default="1")
    args = ap.parse_args()
    run("inventory.ini", args.out_dir, "--workers", args.workers)

    model = InventoryModel()
    theta_star = inventory_optimal_threshold(model)
    v_star = inventory_value(theta_star, model)
    thetas = [r["theta_0"] for r in final_rows(f"{args.out_dir}/inventory/iterations.csv")]
    print(f"closed-form optimum theta* = {theta_star:.4f}, cost {v_star:.4f}")
    describe("final theta", thetas)
    describe("cost gap", [inventory_value(t, model) - v_star for t in thetas])


if __name__ == "__main__":
    main()
