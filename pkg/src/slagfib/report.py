"""Figures written next to the JSON/CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_fibre(points, path, title: str = "") -> Path:
    """log|z_k| over the first two grid angles, one panel per coordinate."""
    pts = np.asarray(points)
    n = pts.ndim - 1
    fig, axes = plt.subplots(1, n + 1, figsize=(3.2 * (n + 1), 3.0))
    sl = tuple([slice(None), slice(None)] + [0] * (n - 2)) if n >= 2 else (slice(None),)
    for k, ax in enumerate(np.atleast_1d(axes)):
        val = np.log(np.abs(pts[..., k]))[sl]
        if val.ndim == 2:
            im = ax.imshow(val.T, origin="lower", aspect="auto", extent=(0, 2 * np.pi, 0, 2 * np.pi))
            fig.colorbar(im, ax=ax, shrink=0.8)
            ax.set_xlabel("x1")
            ax.set_ylabel("x2")
        else:
            ax.plot(np.linspace(0, 2 * np.pi, len(val), endpoint=False), val)
            ax.set_xlabel("x1")
        ax.set_title(f"log|z{k}|")
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_convergence(rows, path, xkey: str, ykeys, title: str = "", logx: bool = False) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    x = [r[xkey] for r in rows]
    for k in ykeys:
        y = [max(r[k], 1e-300) for r in rows]
        ax.plot(x, y, marker="o", label=k)
    ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xkey)
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_history(history, path) -> Path:
    """Newton residual per continuation step."""
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    s = [h["s"] for h in history]
    res = [max(h["residual"], 1e-300) for h in history]
    ax.semilogy(s, res, marker="o")
    ax.set_xlabel("s")
    ax.set_ylabel("sup |F|")
    return _save(fig, path)


def plot_moduli(chart_index: dict, path) -> Path:
    """Moduli coordinates of the swept fibres against their labels."""
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    for f in chart_index["fibres"]:
        if f.get("moduli") is None:
            continue
        m = f["moduli"]
        ax.plot(m[0], m[-1], "o", color="k" if f["status"] == "verified" else "r")
    ax.set_xlabel("moduli 1")
    ax.set_ylabel(f"moduli {len(chart_index['nu']) - 1}")
    return _save(fig, path)


def plot_trace(trace: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    ax.semilogy(trace["s"], np.maximum(trace["residual_max"], 1e-300), marker=".", label="hypersurface residual")
    ax.set_xlabel("s")
    ax.legend(fontsize=7)
    return _save(fig, path)
