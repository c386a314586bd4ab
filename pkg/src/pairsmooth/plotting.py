"""Matplotlib figures rendered next to the CSV reports."""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(line for line in f if not line.startswith("#")))


def histogram_figure(hist_csv, out_path, title=None):
    """Bar chart of winning softmax scores from a ``bin_lower,bin_upper,count`` file."""
    rows = read_csv(hist_csv)
    lo = [float(r["bin_lower"]) for r in rows]
    width = [float(r["bin_upper"]) - float(r["bin_lower"]) for r in rows]
    counts = [int(r["count"]) for r in rows]
    total = sum(counts) or 1
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(lo, [c / total for c in counts], width=width, align="edge",
               color="#d95f02", edgecolor="white", linewidth=0.5)
        ax.set_xlim(lo[0], 1.0)
        ax.set_xlabel("winning softmax score")
        ax.set_ylabel("fraction of samples")
        if title:
            ax.set_title(title)
        fig.savefig(out_path)
        plt.close(fig)


def runlog_figure(runlog_csv, out_path):
    rows = read_csv(runlog_csv)
    epochs = [int(r["epoch"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(epochs, [float(r["train_loss"]) for r in rows], color="#1b9e77", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("train loss")
        val = [(e, float(r["val_error"])) for e, r in zip(epochs, rows) if r["val_error"]]
        if val:
            ax2 = ax.twinx()
            ax2.plot(*zip(*val), color="#7570b3", label="val error")
            ax2.set_ylabel("validation error")
        fig.savefig(out_path)
        plt.close(fig)


def sweep_figure(sweep_csv, out_path, axis):
    rows = read_csv(sweep_csv)
    labels = [r["value"] for r in rows]
    errors = [100 * float(r["final_error"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if axis == "strategy":
            ax.bar(labels, errors, color="#1b9e77")
        else:
            ax.plot([float(v) for v in labels], errors, marker="o", color="#1b9e77")
        ax.set_xlabel(axis)
        ax.set_ylabel("test error (%)")
        fig.savefig(out_path)
        plt.close(fig)
