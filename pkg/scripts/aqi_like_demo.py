#!/usr/bin/env python3
"""Air-quality-like demo: sparse skewed Z1 monitors plus a dense Z2 model field.

Writes the two input CSVs, a prediction grid carrying Z2, then runs
ingest -> train -> predict -> exceedance through the command line and prints
how well the median surface tracks the (known) latent truth.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from dck.cli import main as dck
from dck.metrics import mae
from dck.simgen import air_quality_like
from dck.tables import csv_text, read_csv


def write(path, columns):
    Path(path).write_text(csv_text(columns))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n1", type=int, default=1000)
    ap.add_argument("--n2", type=int, default=10_000)
    ap.add_argument("--grid", type=int, nargs=2, default=(60, 25), metavar=("NX", "NY"))
    ap.add_argument("--threshold", type=float, default=50.0, help="exceedance level for Z1")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="aqi_demo")
    args = ap.parse_args(argv)

    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    aq = air_quality_like(args.n1, args.n2, seed=args.seed)
    s1, s2 = aq.data.set1, aq.data.set2
    write(d / "z1.csv", {"x": s1.locations[:, 0], "y": s1.locations[:, 1], "z1": s1.values})
    write(d / "z2.csv", {"x": s2.locations[:, 0], "y": s2.locations[:, 1], "z2": s2.values})
    x0, y0, x1, y1 = aq.bbox
    gx, gy = np.meshgrid(np.linspace(x0, x1, args.grid[0]), np.linspace(y0, y1, args.grid[1]))
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    write(d / "grid.csv", {"x": grid[:, 0], "y": grid[:, 1], "z2": aq.z2_at(grid, seed=args.seed + 1),
                           "y1_true": aq.y1_surface(grid)})

    common = ["--seed", str(args.seed), "--force"]
    steps = [
        ["ingest", "--z1", str(d / "z1.csv"), "--z2", str(d / "z2.csv"), "--out-dir", str(d / "clean")],
        ["train", "--z1", str(d / "clean" / "z1.csv"), "--z2", str(d / "clean" / "z2.csv"),
         "--config", "bi_tukey_3600", "--out", str(d / "bundle.json")],
        ["predict", "--model", str(d / "bundle.json"), "--locations", str(d / "grid.csv"), "--given", "z2",
         "--out", str(d / "quantiles.csv")],
        ["exceedance", "--model", str(d / "bundle.json"), "--locations", str(d / "grid.csv"), "--given", "z2",
         "--threshold", str(args.threshold), "--out", str(d / "exceedance.csv")],
        ["evaluate", "--pred", str(d / "quantiles.csv"), "--truth", str(d / "grid.csv")],
    ]
    for step in steps:
        code = dck(step + common)
        if code:
            return code
    p = read_csv(d / "exceedance.csv")["prob_exceed"]
    q = read_csv(d / "quantiles.csv")
    truth = aq.y1_surface(grid)
    print(f"median-surface MAE vs latent truth {mae(q['q0.5'], truth):.3f}; "
          f"{np.mean(p > 0.5):.1%} of the grid likely above {args.threshold:g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
