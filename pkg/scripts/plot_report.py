"""Plot ``report.csv`` from a study run as log2(error) against level.

Usage: ``python3 scripts/plot_report.py results/report.csv [-o rates.png]``.
Needs matplotlib (``pip install .[plot]``).
"""
from __future__ import annotations

import argparse
import csv
from collections import defaultdict
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    series = defaultdict(lambda: {"level": [], "err": [], "se": [], "slope": None})
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            s = series[row["study"]]
            s["level"].append(float(row["level"]))
            s["err"].append(float(row["error_rms"]))
            s["se"].append(float(row["stderr"]))
            if row["slope"]:
                s["slope"] = float(row["slope"])
    return series


def main(argv=None):
    parser = argparse.ArgumentParser(description="Plot convergence reports.")
    parser.add_argument("report")
    parser.add_argument("-o", "--output", default="rates.png")
    args = parser.parse_args(argv)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, s in load(args.report).items():
        y = [math.log2(e) for e in s["err"]]
        # delta method: d log2(e) = se / (e ln 2)
        yerr = [se / (e * math.log(2)) if e > 0 else 0 for e, se in zip(s["err"], s["se"])]
        label = name if s["slope"] is None else f"{name} (slope {s['slope']:.2f})"
        ax.errorbar(s["level"], y, yerr=yerr, marker="o", capsize=3, label=label)
    ax.set_xlabel("level")
    ax.set_ylabel("log2 error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=120)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
