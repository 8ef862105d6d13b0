"""Report export: aggregated learning-curve data files plus rendered figures.

For each metric the exporter writes a delimited ``.csv`` (env_step, then
per-variant mean and std across seeds) and a matching ``.png`` rendered
with matplotlib, so reports are consumable both by other tools and by eye.
"""

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

PLOT_METRICS = ("eval_mean", "train_return", "curl_loss", "curl_acc", "critic_loss")


def read_metrics(run_dir):
    with open(os.path.join(run_dir, "metrics.csv")) as f:
        rows = list(csv.DictReader(f))
    out = defaultdict(list)
    for row in rows:
        for key, val in row.items():
            out[key].append(float(val))
    return {k: np.asarray(v) for k, v in out.items()}


def discover_runs(root):
    """{variant: [run dirs]} for an ablation tree, or a single unnamed run."""
    if os.path.exists(os.path.join(root, "metrics.csv")):
        return {os.path.basename(os.path.normpath(root)): [root]}
    groups = {}
    for name in sorted(os.listdir(root)):
        vdir = os.path.join(root, name)
        if not os.path.isdir(vdir):
            continue
        runs = [os.path.join(vdir, d) for d in sorted(os.listdir(vdir))
                if os.path.exists(os.path.join(vdir, d, "metrics.csv"))]
        if runs:
            groups[name] = runs
    if not groups:
        raise ValueError(f"no metrics.csv found under {root}")
    return groups


def export_plots(root, out_dir, metrics=PLOT_METRICS):
    """Write <metric>.csv and <metric>.png per metric; returns written paths."""
    groups = discover_runs(root)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    curves = {}
    for variant, run_dirs in groups.items():
        tables = [read_metrics(d) for d in run_dirs]
        steps = tables[0]["env_step"]
        curves[variant] = (steps, tables)

    for metric in metrics:
        csv_path = os.path.join(out_dir, f"{metric}.csv")
        png_path = os.path.join(out_dir, f"{metric}.png")
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        with open(csv_path, "w") as f:
            header = ["env_step"]
            for variant in curves:
                header += [f"{variant}_mean", f"{variant}_std"]
            f.write(",".join(header) + "\n")
            ref_steps = None
            columns = {}
            for variant, (steps, tables) in curves.items():
                vals = np.stack([t[metric] for t in tables])
                mean, std = vals.mean(axis=0), vals.std(axis=0)
                columns[variant] = (mean, std)
                ref_steps = steps
                ax.plot(steps, mean, label=variant)
                ax.fill_between(steps, mean - std, mean + std, alpha=0.2)
            for i, step in enumerate(ref_steps):
                row = [f"{step:.0f}"]
                for variant in curves:
                    mean, std = columns[variant]
                    row += [f"{mean[i]:.6f}", f"{std[i]:.6f}"]
                f.write(",".join(row) + "\n")
        ax.set_xlabel("environment steps")
        ax.set_ylabel(metric)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(png_path, dpi=120)
        plt.close(fig)
        written += [csv_path, png_path]
    return written
