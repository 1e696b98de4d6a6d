"""Plot the CSVs written by run_configs.py.  Needs matplotlib."""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load(path):
    """Columns of a CSV whose first line is the config-hash comment."""
    with open(path) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    out = {}
    for key in rows[0]:
        try:
            out[key] = np.array([float(r[key]) for r in rows])
        except ValueError:
            out[key] = np.array([r[key] for r in rows])
    return out


def plot_pv(out, ax):
    for path in sorted(out.glob("pv_diagram/pv_*.csv")):
        d = load(path)
        ax.plot(d["detuning_Hz"] / 1e6, d["photon_number"], label=path.stem[3:])
    ax.set_xlabel("cavity-atom detuning (MHz)")
    ax.set_ylabel("photon number")
    ax.legend(fontsize=7)


def plot_scaling(out, ax):
    for path in sorted(out.glob("scaling/scaling_*.csv")):
        d = load(path)
        ax.loglog(d["N_bar"], d["W_out_J"], "o-", label=path.stem[8:])
    ax.set_xlabel("atoms per transit time")
    ax.set_ylabel("work per cycle (J)")
    ax.legend(fontsize=7)


def plot_temperatures(out, ax):
    for path in sorted(out.glob("temperatures/temperatures_*.csv")):
        d = load(path)
        ax.semilogy(d["N_bar"], d["T_c_sr_K"], label=f"{path.stem[13:]} superradiant")
        ax.semilogy(d["N_bar"], d["T_c_th_K"], "--", label=f"{path.stem[13:]} thermal")
    ax.set_xlabel("atoms per transit time")
    ax.set_ylabel("cavity temperature (K)")
    ax.legend(fontsize=7)


def plot_g2(out, ax):
    for name in ("g2_superradiant", "g2_thermal"):
        for csv_name, style in (("g2.csv", "-"), ("g2_micromaser.csv", ":")):
            path = out / name / csv_name
            if path.exists():
                d = load(path)
                ax.plot(d["tau_s"] * 1e6, d["g2"], style, label=f"{name} {csv_name[:-4]}")
    ax.set_xlabel("delay (us)")
    ax.set_ylabel("g2")
    ax.legend(fontsize=7)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    ap.add_argument("--figure", default="out/results.png")
    args = ap.parse_args()
    out = Path(args.out)
    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    plot_pv(out, axes[0, 0])
    plot_scaling(out, axes[0, 1])
    plot_temperatures(out, axes[1, 0])
    plot_g2(out, axes[1, 1])
    fig.tight_layout()
    fig.savefig(args.figure, dpi=120)
    print(args.figure)


if __name__ == "__main__":
    main()
