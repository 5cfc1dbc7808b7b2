"""Plot empirical CDFs from cdf.csv against Exp(1).

usage: python3 scripts/plot_cdf.py out/cdf.csv [out.png]
"""

import sys

import matplotlib.pyplot as plt
import pandas as pd


def main():
    df = pd.read_csv(sys.argv[1])
    out = sys.argv[2] if len(sys.argv) > 2 else "cdf.png"
    fig, ax = plt.subplots(figsize=(7, 5))
    for (exp, radius, law), g in df.groupby(["experiment_id", "radius", "law"]):
        ax.step(g["t"], g["empirical"], where="post", label=f"{exp} r={radius} {law}")
    ref = df.sort_values("t")
    ax.plot(ref["t"], ref["exponential"], "k--", label="1 - exp(-t)")
    ax.set_xlim(0, 5)
    ax.set_xlabel("rescaled gap")
    ax.set_ylabel("CDF")
    ax.legend(fontsize=7)
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main()
