"""PNG figures rendered next to the CSV outputs (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from dvf.io import field_names  # noqa: E402

DPI = 120


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_trace(trace, path, bounds=None) -> Path:
    """Loss and errors per epoch on a log axis.

    With ``bounds = (alpha, mu)`` the band ``sqrt(L)/mu .. sqrt(L)/alpha``
    around the discrete error is shaded.
    """
    epochs = np.array([r["epoch"] for r in trace])
    sq = np.array([r["sqrt_loss"] for r in trace])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(epochs, sq, label="sqrt(loss)", lw=1)
    ax.semilogy(epochs, [r["err_discrete"] for r in trace], label="error vs discrete solution", lw=1)
    exact = np.array([r["err_exact"] for r in trace])
    if np.isfinite(exact).any():
        ax.semilogy(epochs, exact, label="relative error vs reference", lw=1)
        ax.semilogy(epochs, [r["best_err"] for r in trace], "--", label="best so far", lw=1)
    if bounds is not None and bounds[0] > 0:
        alpha, mu = bounds
        ax.fill_between(epochs, sq / mu, sq / alpha, color="0.85", label="loss bounds")
    ax.set_xlabel("epoch")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", lw=0.3)
    return _finish(fig, path)


def plot_fields(space, v, path, title: str = "") -> Path:
    """One heat map per field component, x to the right, y up."""
    grid = space.grid
    names = field_names(space)
    data = np.asarray(v).reshape(len(names), *grid.shape)
    ncol = min(len(names), 4)
    nrow = -(-len(names) // ncol)
    fig, axes = plt.subplots(nrow, ncol, figsize=(3.2 * ncol, 2.9 * nrow), squeeze=False)
    for ax in axes.flat[len(names) :]:
        ax.axis("off")
    for ax, name, values in zip(axes.flat, names, data):
        im = ax.imshow(values.T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
        ax.set_title(name, fontsize=9)
        fig.colorbar(im, ax=ax, fraction=0.046)
    if title:
        fig.suptitle(title, fontsize=10)
    return _finish(fig, path)


def plot_beta(ns, betas, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ns, betas, "o-")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("N")
    ax.set_ylabel("inf-sup constant")
    ax.set_ylim(bottom=0)
    ax.grid(True, lw=0.3)
    return _finish(fig, path)
