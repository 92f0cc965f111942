"""PNG figures written next to the CSV output (non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_routes(path, t, routes: dict, ylabel, title):
    """Overlay of one observable from several routes."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in routes.items():
        if values is not None:
            ax.plot(t, values, label=name, lw=1.5)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_differences(path, t, diffs: dict, tol=None):
    """Absolute pairwise differences on a log axis, with the tolerance line."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, d in diffs.items():
        ax.semilogy(t, np.maximum(np.abs(d), 1e-17), label=name, lw=1.2)
    if tol is not None:
        ax.axhline(tol, color="k", ls="--", lw=1, label="tolerance")
    ax.set_xlabel("t")
    ax.set_ylabel("|difference|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_field(path, x, t, values, title):
    """P(x, t) profiles, one curve per stored time."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for ti, row in zip(t, values):
        ax.plot(x, row, lw=1.2, label=f"t={ti:g}")
    ax.set_xlabel("x")
    ax.set_ylabel("P(x, t)")
    ax.set_title(title)
    if len(t) <= 8:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
