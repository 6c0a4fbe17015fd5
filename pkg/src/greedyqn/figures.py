"""Figure rendering for solver traces.

Uses the Agg backend so report generation works on headless machines.
Each function writes a PNG next to the delimited output and returns the
path it wrote.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["convergence_figure", "comparison_figure"]


def _grad_series(trace):
    iters = [rec.k for rec in trace]
    norms = [max(rec.grad_norm, 1e-300) for rec in trace]
    return iters, norms


def convergence_figure(trace, path, title=None):
    """Gradient norm against iteration on a log scale for one run."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    iters, norms = _grad_series(trace)
    ax.semilogy(iters, norms, marker="o", markersize=3, linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("gradient norm")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def comparison_figure(labeled_traces, path, x_axis="iteration", title=None):
    """Overlay several runs.

    labeled_traces is a list of (label, trace) pairs.  x_axis selects
    the abscissa: "iteration" uses the step counter, "scalars" uses the
    cumulative pushed-scalar count recorded in the trace (runs without
    communication fall back to iterations for that line).
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, trace in labeled_traces:
        if x_axis == "scalars":
            xs = [rec.scalars_pushed for rec in trace]
            if any(v is None for v in xs):
                xs = [rec.k for rec in trace]
        else:
            xs = [rec.k for rec in trace]
        norms = [max(rec.grad_norm, 1e-300) for rec in trace]
        ax.semilogy(xs, norms, marker="o", markersize=2.5, linewidth=1.1, label=label)
    ax.set_xlabel("scalars pushed" if x_axis == "scalars" else "iteration")
    ax.set_ylabel("gradient norm")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
