"""Figure rendering. Every figure is drawn from the same series that are
written out as CSV, so the images can be rebuilt from the tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import CLASS_NAMES  # noqa: E402

# no version or date stamps so reruns produce identical bytes
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_signal(path, t, raw, prepared, upper, lower, title: str = ""):
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    ax0.plot(t, raw, lw=1, color="0.3")
    ax0.set_ylabel("mean change")
    ax1.plot(t, prepared, lw=1, label="smoothed")
    ax1.plot(t, upper, lw=1, ls="--", label="upper")
    ax1.plot(t, lower, lw=1, ls="--", label="lower")
    ax1.fill_between(t, lower, upper, alpha=0.15)
    ax1.set_xlabel("step")
    ax1.set_ylabel("normalized")
    ax1.legend(frameon=False, fontsize=8)
    if title:
        ax0.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_spectrum(path, freqs, mag, edges, title: str = ""):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    keep = freqs <= edges[-1] * 1.5
    ax.plot(freqs[keep], mag[keep], marker=".", lw=1)
    for e in edges:
        ax.axvline(e, color="0.7", lw=0.8)
    ax.set_xlabel("frequency (cycles/step)")
    ax.set_ylabel("normalized |FFT|")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_bars(path, labels, values, ylabel: str, title: str = ""):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.arange(len(labels))
    ax.bar(x, values, color="tab:blue")
    ax.set_xticks(x, labels, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_counts(path, counts, row_labels, col_labels, title: str = ""):
    """Heat map of an integer count table with the numbers written in."""
    counts = np.asarray(counts)
    fig, ax = plt.subplots(figsize=(6.5, 5))
    ax.imshow(counts, cmap="Blues")
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            v = counts[i, j]
            color = "white" if v > counts.max() / 2 else "black"
            ax.text(j, i, str(v), ha="center", va="center", fontsize=7, color=color)
    ax.set_xticks(range(len(col_labels)), col_labels)
    ax.set_yticks(range(len(row_labels)), row_labels)
    ax.set_xlabel("prediction")
    ax.set_ylabel("ground truth")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def class_labels() -> list[str]:
    return [f"{c}" for c in sorted(CLASS_NAMES)]


def plot_scatter(path, x, y, xlabel: str, ylabel: str, title: str = ""):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(x, y, ".", alpha=0.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_front(path, times, positions, slope, intercept, title: str = ""):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(times, positions, ".", label="0.5 crossing")
    ax.plot(times, slope * np.asarray(times) + intercept, lw=1, label="fit")
    ax.set_xlabel("step")
    ax.set_ylabel("front position (cells)")
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
