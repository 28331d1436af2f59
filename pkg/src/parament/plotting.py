"""SVG figures for the experiment outputs (matplotlib, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed salt and no date stamp keep repeated renders byte-identical
plt.rcParams["svg.hashsalt"] = "parament"
plt.rcParams["svg.fonttype"] = "path"
_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


_STYLES = {
    "cond_numeric": ("C0", "-", "conditional, numeric"),
    "cond_analytic": ("C0", "--", "conditional, analytic"),
    "uncond_numeric": ("C3", "-", "unconditional, numeric"),
    "uncond_analytic": ("C3", "--", "unconditional, analytic"),
    "closed_form": ("C2", ":", "conditional, resonance closed form"),
}


def plot_trace(path, phase, curves, title=""):
    """E_N over one drive period; ``curves`` maps style keys to arrays."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, y in curves.items():
        if y is None or not np.isfinite(y).any():
            continue
        color, ls, label = _STYLES.get(key, ("k", "-", key))
        ax.plot(phase, y, color=color, ls=ls, label=label)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("t / T")
    ax.set_ylabel("log negativity")
    ax.set_xlim(phase[0], phase[-1])
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep1d(path, x, curves, xlabel, title=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, y in curves.items():
        y = np.asarray(y, dtype=float)
        if not np.isfinite(y).any():
            continue
        color, ls, label = _STYLES.get(key, ("k", "-", key))
        marker = "o" if ls == "-" else None
        ax.plot(x, y, color=color, ls=ls, marker=marker, ms=3, label=label)
    ax.axhline(0.0, color="k", ls="--", lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("period-averaged log negativity")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_heatmaps(path, x, y, panels, xlabel, ylabel, window=None, title=""):
    """Grid of colour maps.

    ``panels`` is a list of (title, Z, mask) with Z shaped (len(y), len(x));
    masked cells are drawn black.  ``window`` is an optional pair of arrays
    (x_low, x_high) as functions of ``y`` drawn as dashed boundaries.
    """
    n = len(panels)
    cols = 2 if n > 1 else 1
    rows = int(np.ceil(n / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(5 * cols, 4 * rows), squeeze=False)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("black")
    for ax, (name, Z, mask) in zip(axes.flat, panels):
        Z = np.ma.masked_invalid(np.asarray(Z, dtype=float))
        if mask is not None:
            Z = np.ma.masked_where(np.asarray(mask, dtype=bool) | Z.mask, Z)
        im = ax.pcolormesh(x, y, Z, cmap=cmap, shading="nearest")
        fig.colorbar(im, ax=ax)
        if window is not None:
            lo, hi = window
            ax.plot(lo, y, color="yellow", ls="--", lw=1.2)
            ax.plot(hi, y, color="yellow", ls="--", lw=1.2)
            ax.set_xlim(x[0], x[-1])
        ax.set_title(name, fontsize=9)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
    for ax in list(axes.flat)[n:]:
        ax.axis("off")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def _ellipse_xy(ell, n=200):
    s = np.linspace(0, 2 * np.pi, n)
    return (
        ell.major * np.cos(s)[:, None] * ell.major_axis[None, :]
        + ell.minor * np.sin(s)[:, None] * ell.minor_axis[None, :]
    )


def plot_ellipse(path, numeric, analytic=None, vectors=None, title=""):
    """Standard-deviation ellipses with optional mode directions.

    ``vectors`` maps labels to 2-vectors drawn as scaled arrows.
    """
    fig, ax = plt.subplots(figsize=(5, 5))
    xy = _ellipse_xy(numeric)
    ax.plot(xy[:, 0], xy[:, 1], color="C0", label="numeric")
    if analytic is not None:
        xy = _ellipse_xy(analytic)
        ax.plot(xy[:, 0], xy[:, 1], color="C1", ls="--", label="analytic")
    for i, (label, (v, length)) in enumerate((vectors or {}).items()):
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v) * length
        ax.annotate(
            "", xy=v, xytext=(0, 0), arrowprops=dict(arrowstyle="->", color=f"C{i + 2}")
        )
        ax.plot([], [], color=f"C{i + 2}", label=label)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
