"""
Figures for benchmark reports.

Reads the mean CSV files written by :mod:`dualcadmm.bench_bpd` and draws the
four metric curves, one panel per metric, one line per algorithm.  Uses the
non-interactive Agg backend so it runs headless.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench_bpd import read_csv  # noqa: E402

PANELS = (
    ("rel_subopt", "Relative suboptimality"),
    ("infeas", "Infeasibility"),
    ("sol_dist", "Distance to reference solution"),
    ("cons_viol", "Consensus violation"),
)

STYLES = {"aggregate": dict(color="C0", ls="-"), "decomposed": dict(color="C3", ls="--")}

# zeros cannot be drawn on a log axis; clip them to something visible
FLOOR = 1e-16


def plot_metrics(mean_csvs, out_path, title=None, dpi=120):
    """Draw a 2x2 panel figure from ``{algorithm: mean_csv_path}``.

    Parameters
    ----------
    mean_csvs : dict
        Algorithm name to CSV path (benchmark schema).
    out_path : str
        Output image file; the format follows the extension.

    Returns
    -------
    str
        ``out_path``.
    """
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5), sharex=True)
    for alg, path in mean_csvs.items():
        rows = read_csv(path)
        k = np.array([r.iter for r in rows])
        for ax, (attr, label) in zip(axes.flat, PANELS):
            vals = np.array([getattr(r, attr) for r in rows])
            ax.semilogy(k, np.maximum(vals, FLOOR), label=alg, lw=1.2,
                        **STYLES.get(alg, {}))
            ax.set_title(label, fontsize=10)
    for ax in axes.flat:
        ax.grid(True, which="major", alpha=0.3)
        ax.spines["right"].set_visible(False)
        ax.spines["top"].set_visible(False)
    for ax in axes[1]:
        ax.set_xlabel("iteration")
    axes[0, 0].legend(frameon=False, fontsize=9)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)
    return out_path
