"""Matplotlib figures written next to the report tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_rate_curves", "plot_sweep"]

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _finish(fig, ax, path) -> Path:
    ax.set_xlabel("pixel error")
    ax.set_ylabel("detection rate")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_rate_curves(curves, path, title: str = "") -> Path:
    """Detection rate over pixel error, one line per curve (aggregates dashed)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for c in curves:
            xs = range(len(c.rates))
            dashed = c.name in ("weighted", "unweighted")
            ax.plot(xs, c.rates, "--" if dashed else "-", marker="" if dashed else ".", label=f"{c.name} (n={c.count})")
        ax.set_xlim(0, max(len(c.rates) for c in curves) - 1)
        if title:
            ax.set_title(title)
        return _finish(fig, ax, path)


def plot_sweep(param: str, results, path) -> Path:
    """Rate curves for each value of a swept parameter."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        cmap = plt.get_cmap("viridis")
        n = max(len(results) - 1, 1)
        for i, (value, curve) in enumerate(results):
            ax.plot(range(len(curve.rates)), curve.rates, color=cmap(i / n), label=f"{param}={value}")
        ax.set_title(f"sweep of {param}")
        return _finish(fig, ax, path)
