#!/usr/bin/env python3
"""Plot gate weights against the interpolation ratio from an expert-sweep CSV.

Usage: python scripts/plot_expert_sweep.py sweep.csv [out.png]
"""

import csv
import sys


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    path = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else "expert_sweep.png"
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    ratios = [float(r["ratio"]) for r in rows]
    names = [k for k in rows[0] if k.startswith("w_")]

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name in names:
        ax.plot(ratios, [float(r[name]) for r in rows], label=name, marker=".")
    ax.set_xscale("log")
    ax.set_xlabel("interpolation ratio (native GSD / target GSD)")
    ax.set_ylabel("expert weight")
    ax.set_ylim(0, 1)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
