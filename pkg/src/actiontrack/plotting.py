"""Static figures: per-frame overlays of tracked boxes with id, action code
and speed, a speed timeline per track, and the action confusion matrix."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

ACTION_COLORS = {"ST": "tab:blue", "WA": "tab:green", "RU": "tab:red", "LY": "tab:purple", "UN": "tab:gray"}
DPI = 100


def _label(r) -> str:
    speed = "-" if r.speed_kmh is None else f"{r.speed_kmh:.1f} km/h"
    return f"{r.person_id} {r.action or '-'} {speed}"


def plot_overlays(records, frame_size, outdir, every: int = 25) -> List[Path]:
    """One PNG for every ``every``-th frame that carries records.

    The canvas has the frame's pixel size with the origin at the top-left,
    so boxes land where the detector reported them.
    """
    if every < 1:
        raise ValueError("every must be >= 1")
    width, height = frame_size
    by_frame = defaultdict(list)
    for r in records:
        by_frame[r.frame_index].append(r)
    outdir = Path(outdir)
    written = []
    frames = sorted(by_frame)
    if not frames:
        return written
    outdir.mkdir(parents=True, exist_ok=True)
    for f in frames[::every]:
        fig = plt.figure(figsize=(width / DPI, height / DPI), dpi=DPI)
        ax = fig.add_axes([0, 0, 1, 1])
        ax.set_xlim(0, width)
        ax.set_ylim(height, 0)
        ax.set_facecolor("0.15")
        ax.set_xticks([])
        ax.set_yticks([])
        for r in by_frame[f]:
            x, y, w, h = r.bbox
            color = ACTION_COLORS.get(r.action, "white")
            ax.add_patch(Rectangle((x, y), w, h, fill=False, edgecolor=color, linewidth=1.5))
            ax.text(x, y - 3, _label(r), color=color, fontsize=8, va="bottom")
        ax.text(5, 15, f"frame {f}  t={by_frame[f][0].timestamp_s:.2f}s", color="white", fontsize=8)
        path = outdir / f"overlay_{f:06d}.png"
        fig.savefig(path, dpi=DPI)
        plt.close(fig)
        written.append(path)
    return written


def plot_speed_timeline(records, path) -> Path:
    """Estimated speed of every human track over time."""
    tracks = defaultdict(list)
    for r in records:
        if r.speed_kmh is not None:
            tracks[r.person_id].append((r.timestamp_s, r.speed_kmh))
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for pid in sorted(tracks):
        t, v = zip(*tracks[pid])
        ax.plot(t, v, lw=1, label=f"id {pid}")
    ax.axhline(7.0, color="k", lw=0.6, ls="--")
    ax.axhline(1.0, color="k", lw=0.6, ls=":")
    ax.set_xlabel("time / s")
    ax.set_ylabel("speed / km/h")
    if tracks and len(tracks) <= 12:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_confusion(confusion, codes, path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3.6))
    im = ax.imshow(confusion, cmap="Blues")
    ax.set_xticks(range(len(codes)), codes)
    ax.set_yticks(range(len(codes)), codes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("truth")
    peak = confusion.max() if confusion.size else 0
    for i in range(confusion.shape[0]):
        for j in range(confusion.shape[1]):
            ax.text(j, i, str(int(confusion[i, j])), ha="center", va="center", fontsize=7,
                    color="white" if peak and confusion[i, j] > 0.6 * peak else "black")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
