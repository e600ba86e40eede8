"""Figure rendering next to the delimited outputs.

The CSV files carry all the numbers; these helpers just draw the usual
log-log and trace views of them so a run leaves something to look at
without a separate plotting step.  Rendering always goes through the
Agg backend straight to a file.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["sweep_figure", "cost_mse_figure", "trace_figure"]


def _slope_line(ax, x, slope, intercept, label):
    xs = np.array([np.min(x), np.max(x)], dtype=float)
    ax.loglog(xs, np.exp(intercept + slope * np.log(xs)), "k--", lw=1.0, label=label)


def sweep_figure(deltas, summed, slope, intercept, ylabel, path):
    """Summed statistic against Delta_L on log-log axes with the fitted slope."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(deltas, summed, "o-", color="tab:blue")
    _slope_line(ax, deltas, slope, intercept, f"rate = {slope:.4f}")
    ax.set_xlabel(r"$\Delta_L$")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cost_mse_figure(mses, costs, exponent, intercept, path):
    """Cost against summed MSE on log-log axes, annotated with the exponent."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(mses, costs, "s-", color="tab:red")
    _slope_line(ax, mses, exponent, intercept, f"cost ~ MSE^{exponent:.3f}")
    ax.set_xlabel("summed MSE")
    ax.set_ylabel("cost (Euler steps + resampling draws)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def trace_figure(thetas, reference, path):
    """Iterate components and, when a reference is given, relative distance."""
    thetas = np.asarray(thetas, dtype=float)
    its = np.arange(thetas.shape[0])
    ncols = 2 if reference is not None else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5.0 * ncols, 3.8), squeeze=False)
    ax = axes[0, 0]
    for j in range(thetas.shape[1]):
        ax.plot(its, thetas[:, j], label=f"theta{j + 1}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("parameter value")
    ax.legend()
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        dist = np.linalg.norm(thetas - reference, axis=1) / np.linalg.norm(reference)
        ax = axes[0, 1]
        ax.semilogy(its, np.maximum(dist, 1e-16), color="tab:green")
        ax.set_xlabel("iteration")
        ax.set_ylabel("relative distance to reference")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
