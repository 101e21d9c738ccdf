"""Quick look at an rjacobi output directory.

    python scripts/plot_outputs.py OUT_DIR [--save FIG.png]
"""
import argparse
import json
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--save", type=Path)
    args = ap.parse_args()
    manifest = json.loads((args.out_dir / "manifest.json").read_text())
    csvs = [args.out_dir / f for f in manifest["outputs"] if f.endswith(".csv")]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for path in csvs:
        df = pd.read_csv(path)
        x, *ys = df.columns
        # Last column against the first.
        ax.plot(df[x], df[ys[-1]], lw=0.8, label=path.stem)
    ax.set_xlabel(pd.read_csv(csvs[0]).columns[0])
    ax.set_title(f"{manifest['command']} (seed {manifest['seed']})")
    if len(csvs) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
