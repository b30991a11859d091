import sys
from pathlib import Path

import numpy as np

from renewal_rl.cli import main, read_csv

CONFIGS = Path(__file__).resolve().parent / "configs"


def run(config, out, *extra):
    code = main(["run", str(CONFIGS / config), "--out-dir", str(out), *extra])
    if code:
        sys.exit(code)


def final_rows(path):
    last = {}
    for r in read_csv(path):
        last[r["replication"]] = r
    return [last[k] for k in sorted(last)]


def describe(label, values):
    v = np.asarray(values, dtype=float)
    print(f"{label}: median {np.median(v):.4g}  mean {v.mean():.4g}  std {v.std(ddof=1):.3g}"
          f"  (n={v.size})")
