"""Figures rendered next to result CSVs (matplotlib, headless backend)."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def render(table, layout, path):
    """scatter-line plot of y against x, one series per value of `group`.

    Returns the path written, or None when no row has both values.
    """
    x, y, group, logx, logy = layout
    series = {}
    for r in table.rows:
        if not (_num(r.get(x)) and _num(r.get(y))):
            continue
        if logy and r[y] <= 0:
            continue
        series.setdefault(r.get(group) if group else "", []).append((r[x], r[y]))
    if not series:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for key, pts in series.items():
        pts.sort()
        ax.plot(*zip(*pts), marker="o", label=f"{group}={key}" if group else None)
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    if group:
        ax.legend(fontsize=8)
    ax.set_title(table.experiment)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
