"""Matplotlib figures written next to the delimited report outputs.

Figures are built on bare :class:`matplotlib.figure.Figure` objects, so no
pyplot state or interactive backend is involved. SVG output is deterministic:
no timestamp metadata, a fixed id salt and glyphs rendered as paths.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import PathPatch, Wedge
from matplotlib.path import Path as MplPath

# qualitative palette, one color per class id
CLASS_COLORS = (
    "#1f77b4", "#ff7f0e", "#d62728", "#9467bd", "#2ca02c",
    "#8c564b", "#e377c2", "#17becf", "#7f7f7f",
)

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "svg.fonttype": "path",
    "svg.hashsalt": "qkdsent",
    "savefig.dpi": 150,
}


@contextmanager
def report_style():
    with matplotlib.rc_context(STYLE):
        yield


def class_color(c: int) -> str:
    return CLASS_COLORS[c % len(CLASS_COLORS)]


def save_figure(fig: Figure, path) -> Path:
    path = Path(path)
    meta = {"Date": None} if path.suffix == ".svg" else {}
    if path.suffix == ".png":
        meta = {"Software": None}
    with report_style():
        fig.savefig(path, metadata=meta, bbox_inches="tight")
    return path


def _arc_points(theta1, theta2, r, n=24):
    t = np.linspace(theta1, theta2, n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def chord_layout(out_counts, gap: float = math.radians(3.0)):
    """Angular span per class, proportional to its misclassified count.

    Returns a list of (start, end) angles in radians, counter-clockwise from
    the positive x axis. Classes without misclassifications get a zero-length
    span (an anchor point) between the gaps.
    """
    out_counts = np.asarray(out_counts, dtype=float)
    total = out_counts.sum()
    usable = 2 * math.pi - gap * len(out_counts)
    spans, theta = [], math.pi / 2
    for cnt in out_counts:
        width = usable * cnt / total if total > 0 else 0.0
        spans.append((theta, theta + width))
        theta += width + gap
    return spans


def chord_figure(edges, class_names, title: str | None = None) -> Figure:
    """Chord diagram of misclassifications.

    Each class owns an arc whose length is its share of all misclassified
    samples; a ribbon leaves the true class's arc (in that class's color) and
    lands on the predicted class's anchor. Ribbon patches carry the SVG id
    ``ribbon-<true>-<pred>``.
    """
    C = len(class_names)
    out = np.zeros(C)
    for a, _, cnt in edges:
        out[a] += cnt
    with report_style():
        fig = Figure(figsize=(6.5, 6.5))
        ax = fig.add_subplot(111)
        ax.set_xlim(-1.45, 1.45)
        ax.set_ylim(-1.45, 1.45)
        ax.set_aspect("equal")
        ax.axis("off")
        if title:
            ax.set_title(title)
        if not edges:
            ax.text(0, 0, "no misclassifications", ha="center", va="center", fontsize=12)
            for c, name in enumerate(class_names):
                ax.plot([], [], color=class_color(c), lw=6, label=f"{c}: {name}")
            ax.legend(loc="lower center", ncol=2, frameon=False, fontsize=7)
            return fig

        spans = chord_layout(out)
        r_in, r_out = 1.0, 1.08
        for c, (t0, t1) in enumerate(spans):
            mid = 0.5 * (t0 + t1)
            if t1 > t0:
                w = Wedge((0, 0), r_out, math.degrees(t0), math.degrees(t1),
                          width=r_out - r_in, color=class_color(c))
                w.set_gid(f"arc-{c}")
                ax.add_patch(w)
            else:
                ax.plot([r_in * math.cos(mid), r_out * math.cos(mid)],
                        [r_in * math.sin(mid), r_out * math.sin(mid)],
                        color=class_color(c), lw=1.5)
            ax.text(1.22 * math.cos(mid), 1.22 * math.sin(mid), f"{c}",
                    ha="center", va="center", color=class_color(c), fontweight="bold")

        cursor = [t0 for t0, _ in spans]
        for a, b, cnt in edges:
            t0, t1 = spans[a]
            width = (t1 - t0) * cnt / out[a]
            s0, s1 = cursor[a], cursor[a] + width
            cursor[a] = s1
            tb = 0.5 * (spans[b][0] + spans[b][1])
            target = (r_in * math.cos(tb), r_in * math.sin(tb))
            src = _arc_points(s0, s1, r_in)
            verts = list(map(tuple, src))
            codes = [MplPath.MOVETO] + [MplPath.LINETO] * (len(src) - 1)
            verts += [(0.0, 0.0), target, (0.0, 0.0), tuple(src[0])]
            codes += [MplPath.CURVE3, MplPath.CURVE3, MplPath.CURVE3, MplPath.CURVE3]
            patch = PathPatch(MplPath(verts, codes), facecolor=class_color(a),
                              edgecolor=class_color(a), alpha=0.6, lw=0.3)
            patch.set_gid(f"ribbon-{a}-{b}")
            ax.add_patch(patch)

        for c, name in enumerate(class_names):
            ax.plot([], [], color=class_color(c), lw=6, label=f"{c}: {name}")
        ax.legend(loc="upper center", bbox_to_anchor=(0.5, 0.02), ncol=2,
                  frameon=False, fontsize=7)
    return fig


def confusion_figure(confusion, class_names, title: str | None = None) -> Figure:
    cm = np.asarray(confusion, dtype=float)
    support = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, support, out=np.zeros_like(cm), where=support > 0)
    with report_style():
        fig = Figure(figsize=(6.0, 5.2))
        ax = fig.add_subplot(111)
        im = ax.imshow(frac, cmap="Blues", vmin=0.0, vmax=1.0)
        C = len(class_names)
        ax.set_xticks(range(C))
        ax.set_yticks(range(C))
        ax.set_xticklabels([str(c) for c in range(C)])
        ax.set_yticklabels([f"{c} {n}" for c, n in enumerate(class_names)])
        ax.set_xlabel("predicted class")
        ax.set_ylabel("true class")
        for i in range(C):
            for j in range(C):
                if cm[i, j]:
                    ax.text(j, i, f"{int(cm[i, j])}", ha="center", va="center", fontsize=6,
                            color="white" if frac[i, j] > 0.5 else "black")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="row fraction")
        if title:
            ax.set_title(title)
    return fig


def loss_figure(trace, title: str = "MLP training loss") -> Figure:
    with report_style():
        fig = Figure(figsize=(5.0, 3.2))
        ax = fig.add_subplot(111)
        ax.plot(np.arange(1, len(trace) + 1), trace, color=CLASS_COLORS[0])
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean cross-entropy")
        ax.set_yscale("log")
        ax.grid(alpha=0.3)
        ax.set_title(title)
    return fig


def telemetry_figure(series_by_label, class_names) -> Figure:
    """QBER and SKR traces of several logs, one color per class."""
    with report_style():
        fig = Figure(figsize=(7.0, 4.5))
        ax_q, ax_s = fig.subplots(2, 1, sharex=True)
        for label, records in series_by_label:
            t = np.arange(len(records))
            ax_q.plot(t, [r.qber for r in records], lw=0.7, color=class_color(label),
                      label=f"{label}: {class_names[label]}")
            ax_s.plot(t, [r.skr for r in records], lw=0.7, color=class_color(label))
        ax_q.set_ylabel("QBER")
        ax_s.set_ylabel("SKR (bit/s)")
        ax_s.set_xlabel("sample")
        ax_q.legend(fontsize=6, ncol=3, frameon=False)
    return fig
