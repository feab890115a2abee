"""Plot the tables written by scripts/reproduce_figures.sh (needs matplotlib).

    python scripts/plot_figures.py [out]
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from backaction.counting import parse_table


def _plot(table, path, xlabel, ylabel, log=()):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    x, *cols = list(table)
    for c in cols:
        ax.plot(table[x], table[c], label=c)
    if "x" in log:
        ax.set_xscale("log")
    if "y" in log:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def main(out="out"):
    out = Path(out)
    jobs = [("figure1/density.dat", "t", "|phi(z0,t)|^2", "x"),
            ("figure2/intensity.dat", "tau", "I(tau)/N", "xy"),
            ("figure3/p_long.dat", "m", "p(m)", "")]
    for rel, xl, yl, log in jobs:
        src = out / rel
        if not src.exists():
            print(f"skip {src} (not found)")
            continue
        dest = out / (rel.replace("/", "_").removesuffix(".dat") + ".png")
        _plot(parse_table(src.read_text()), dest, xl, yl, log)
        print(dest)


if __name__ == "__main__":
    main(*sys.argv[1:])
