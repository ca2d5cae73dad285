"""Matplotlib renderings of the report TSV series, written next to them.

All figures go straight to files through the Agg backend with fixed metadata,
so repeated runs produce byte-identical images.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_META = {"Software": "genopheno"}


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def save_histogram_figure(hist, path, title="k-mer occurrence histogram"):
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = sorted(hist.bins)
    ys = [hist.bins[x] for x in xs]
    ax.bar(xs, ys, color="#3b6ea5", width=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("occurrence count")
    ax.set_ylabel("distinct k-mers")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def save_roc_figure(curve, path, label="forest"):
    fig, ax = plt.subplots(figsize=(5, 5))
    xs = [p[0] for p in curve.points]
    ys = [p[1] for p in curve.points]
    ax.plot(xs, ys, color="#3b6ea5", label=f"{label} (AUC={curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], linestyle="--", color="#888888", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("ROC")
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def save_curve_figure(curve, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(
        curve.sizes,
        curve.mean_accuracy,
        yerr=curve.std_accuracy,
        marker="o",
        capsize=3,
        color="#3b6ea5",
    )
    ax.set_xlabel("subsample size (isolates)")
    ax.set_ylabel("mean test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"accuracy vs sample size ({curve.repeats} repeats)")
    fig.tight_layout()
    _save(fig, path)


def save_ranking_figure(ranking, path, top_n=20):
    entries = list(ranking.entries[:top_n])[::-1]
    fig, ax = plt.subplots(figsize=(6, max(2.5, 0.35 * len(entries) + 1)))
    names = [r for r, _ in entries]
    vals = [v for _, v in entries]
    ax.barh(range(len(entries)), vals, color="#3b6ea5")
    ax.set_yticks(range(len(entries)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("aggregate importance")
    ax.set_title("top regions by feature importance")
    fig.tight_layout()
    _save(fig, path)


def save_stability_figure(table, path, top_regions=6):
    # order regions by their best median rank at the largest size
    order = sorted(
        range(len(table.regions)),
        key=lambda j: (table.median_rank[-1, j], table.regions[j]),
    )[:top_regions]
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in order:
        ax.plot(table.sizes, table.median_rank[:, j], marker="o", label=table.regions[j])
    ax.set_xlabel("subsample size (isolates)")
    ax.set_ylabel("median rank")
    ax.invert_yaxis()
    ax.set_title(f"region rank stability ({table.repeats} repeats)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
