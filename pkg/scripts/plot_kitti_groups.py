#!/usr/bin/env python3
"""Plot per-gap group summaries produced by ``scalematch evaluate --kitti``.

Reads ``groups.json`` from an evaluation output directory and renders one
figure per metric (mean t_err, mean r_err, failure rate) against mean
inter-camera distance, overlaying each method's points with its fitted
logarithmic curve.

Example:
    python scripts/plot_kitti_groups.py out/report --save out/report/plots
"""

import argparse
import json
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRICS = (
    ("mean_t_err", "t_err", "mean normalized positional error"),
    ("mean_r_err", "r_err", "mean rotational error"),
    ("failure_rate", "failure_rate", "localization failure rate"),
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("report_dir", help="directory holding groups.json")
    parser.add_argument("--save", default=None, help="output directory (default: report_dir)")
    args = parser.parse_args()

    report_dir = Path(args.report_dir)
    out_dir = Path(args.save) if args.save else report_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = json.loads((report_dir / "groups.json").read_text())

    for field, curve_key, label in METRICS:
        fig, ax = plt.subplots(figsize=(6, 4))
        for method, report in sorted(groups.items()):
            xs = [g["mean_distance"] for g in report["groups"]]
            ys = [g[field] for g in report["groups"]]
            (line,) = ax.plot(xs, ys, "o", label=method)
            fit = report["curves"].get(curve_key)
            if fit and min(xs) > 0:
                a, b = fit
                grid = [min(xs) + i * (max(xs) - min(xs)) / 99 for i in range(100)]
                ax.plot(grid, [a + b * math.log(x) for x in grid], "-", color=line.get_color(), alpha=0.6)
        ax.set_xlabel("mean inter-camera distance (m)")
        ax.set_ylabel(label)
        ax.legend()
        fig.tight_layout()
        target = out_dir / f"{curve_key}_vs_distance.png"
        fig.savefig(target, dpi=130)
        plt.close(fig)
        print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
