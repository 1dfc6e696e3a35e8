"""Matplotlib figures written straight to files (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .frontier import FrontierPoint  # noqa: E402
from .policy import WealthMoments  # noqa: E402

__all__ = ["plot_frontier", "plot_wealth_moments"]


def plot_frontier(points: Sequence[FrontierPoint], path: Union[str, Path]) -> Path:
    """Terminal variance against terminal mean, one curve per model."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    styles = {"MV": dict(ls="-", color="tab:blue"), "GMV": dict(ls="--", color="tab:red")}
    for model in sorted({p.model for p in points}):
        pts = sorted((p for p in points if p.model == model), key=lambda p: p.mean_T)
        ax.plot([p.var_T for p in pts], [p.mean_T for p in pts], label=model, **styles.get(model, {}))
    ax.set_xlabel("Var(x_T)")
    ax.set_ylabel("E(x_T)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_wealth_moments(moments: WealthMoments, path: Union[str, Path], label: str = "") -> Path:
    """Mean wealth path with a one-standard-deviation band."""
    t = np.arange(moments.T + 1)
    sd = np.sqrt(moments.variance)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, moments.mean, marker="o", label=label or "E(x_t)")
    ax.fill_between(t, moments.mean - sd, moments.mean + sd, alpha=0.2)
    ax.set_xlabel("t")
    ax.set_ylabel("wealth")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
