"""Minimal SVG emitter for diagnostic plots (ROC, calibration, beeswarm).

Only polyline, circle, line, rect and text primitives are used. Numbers are
formatted with fixed precision so the same data always gives the same bytes;
the one volatile field is the generation timestamp in ``<metadata>``, which
can be replaced by a constant.
"""

from __future__ import annotations

import datetime as _dt
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 400
MARGIN = dict(left=60, right=20, top=40, bottom=50)


def _f(v: float) -> str:
    return f"{v:.2f}"


class Canvas:
    """Plot area mapping data coordinates ``[x0, x1] x [y0, y1]`` to pixels."""

    def __init__(self, title: str, xlabel: str, ylabel: str, xlim=(0.0, 1.0), ylim=(0.0, 1.0),
                 width: int = WIDTH, height: int = HEIGHT, left: Optional[int] = None):
        self.width, self.height = width, height
        self.left = MARGIN["left"] if left is None else left
        self.xlim, self.ylim = xlim, ylim
        self.items = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    @property
    def pw(self):
        return self.width - self.left - MARGIN["right"]

    @property
    def ph(self):
        return self.height - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x):
        x0, x1 = self.xlim
        return self.left + (np.asarray(x, dtype=float) - x0) / (x1 - x0) * self.pw

    def py(self, y):
        y0, y1 = self.ylim
        return MARGIN["top"] + (1.0 - (np.asarray(y, dtype=float) - y0) / (y1 - y0)) * self.ph

    def polyline(self, x, y, stroke="#1f77b4", width=2.0, dash: Optional[str] = None):
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.px(x), self.py(y)))
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}"{d} points="{pts}"/>')

    def circle(self, x, y, r=3.0, fill="#1f77b4", opacity=1.0):
        self.items.append(f'<circle cx="{_f(float(self.px(x)))}" cy="{_f(float(self.py(y)))}" r="{r}" '
                          f'fill="{fill}" fill-opacity="{opacity}"/>')

    def text(self, x_px, y_px, s, size=12, anchor="middle", rotate: Optional[float] = None):
        tr = f' transform="rotate({rotate} {_f(x_px)} {_f(y_px)})"' if rotate is not None else ""
        self.items.append(f'<text x="{_f(x_px)}" y="{_f(y_px)}" font-size="{size}" '
                          f'font-family="sans-serif" text-anchor="{anchor}"{tr}>{escape(str(s))}</text>')

    def axes(self, xticks: Sequence[float], yticks: Sequence[float], ytick_labels=None):
        x0, y0 = self.left, MARGIN["top"] + self.ph
        self.items.append(f'<rect x="{self.left}" y="{MARGIN["top"]}" width="{self.pw}" height="{self.ph}" '
                          f'fill="none" stroke="#333"/>')
        for t in xticks:
            x = float(self.px(t))
            self.items.append(f'<line x1="{_f(x)}" y1="{_f(y0)}" x2="{_f(x)}" y2="{_f(y0 + 5)}" stroke="#333"/>')
            self.text(x, y0 + 18, f"{t:g}", size=10)
        labels = ytick_labels or [f"{t:g}" for t in yticks]
        for t, lab in zip(yticks, labels):
            y = float(self.py(t))
            self.items.append(f'<line x1="{_f(x0 - 5)}" y1="{_f(y)}" x2="{_f(x0)}" y2="{_f(y)}" stroke="#333"/>')
            self.text(x0 - 8, y + 4, lab, size=10, anchor="end")
        self.text(self.left + self.pw / 2, self.height - 12, self.xlabel)
        self.text(16, MARGIN["top"] + self.ph / 2, self.ylabel, rotate=-90)
        self.text(self.width / 2, 22, self.title, size=14)

    def render(self, timestamp: Optional[str] = None) -> str:
        stamp = timestamp if timestamp is not None else _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        body = "\n".join(self.items)
        return f"{head}\n<metadata>generated {escape(stamp)}</metadata>\n{body}\n</svg>\n"


def _write(svg: str, path):
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    return svg


def roc_svg(curves, path=None, timestamp: Optional[str] = None) -> str:
    """``curves`` is a list of ``(label, fpr, tpr, auc)``."""
    c = Canvas("ROC curve", "False positive rate", "True positive rate")
    c.axes([0, 0.25, 0.5, 0.75, 1.0], [0, 0.25, 0.5, 0.75, 1.0])
    c.polyline([0, 1], [0, 1], stroke="#999", width=1, dash="4,4")
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    for i, (label, fpr, tpr, a) in enumerate(curves):
        col = colours[i % len(colours)]
        c.polyline(fpr, tpr, stroke=col)
        c.text(c.left + c.pw - 8, MARGIN["top"] + c.ph - 12 - 16 * i, f"{label} (AUC {a:.3f})",
               size=11, anchor="end")
    return _write(c.render(timestamp), path)


def calibration_svg(curves, path=None, timestamp: Optional[str] = None) -> str:
    """``curves`` is a list of ``(label, mean_predicted, observed)``."""
    c = Canvas("Calibration curve", "Mean predicted probability", "Observed fraction prolonged")
    c.axes([0, 0.2, 0.4, 0.6, 0.8, 1.0], [0, 0.2, 0.4, 0.6, 0.8, 1.0])
    c.polyline([0, 1], [0, 1], stroke="#999", width=1, dash="4,4")
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    for i, (label, pred, obs) in enumerate(curves):
        col = colours[i % len(colours)]
        if len(pred) > 1:
            c.polyline(pred, obs, stroke=col)
        for a, b in zip(pred, obs):
            c.circle(a, b, r=3.5, fill=col)
        c.text(c.left + 8, MARGIN["top"] + 16 + 16 * i, label, size=11, anchor="start")
    return _write(c.render(timestamp), path)


def _rgb(v: float) -> str:
    # blue (low feature value) to red (high)
    v = min(max(float(v), 0.0), 1.0)
    return f"#{int(30 + 200 * v):02x}{int(60 + 40 * (1 - abs(2 * v - 1))):02x}{int(230 - 200 * v):02x}"


def beeswarm_svg(feature_names: Sequence[str], points, top: int = 15, path=None,
                 timestamp: Optional[str] = None) -> str:
    """SHAP beeswarm: ``points`` rows are ``(rank, shap, scaled_value)``.

    Features are drawn top to bottom by rank (``feature_names[i]`` is the
    name of rank ``i + 1``); points in the same row are spread vertically by
    order of appearance so overlapping values stay visible.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    pts = pts[pts[:, 0] <= top]
    n_rows = int(min(top, len(feature_names)))
    lim = float(np.abs(pts[:, 1]).max()) if pts.size else 1.0
    lim = lim if lim > 0 else 1.0
    height = max(HEIGHT, 40 + 24 * n_rows + 60)
    c = Canvas("SHAP values (stacked model output)", "SHAP value (probability units)", "",
               xlim=(-lim * 1.05, lim * 1.05), ylim=(n_rows + 0.5, 0.5), width=640, height=height, left=220)
    ticks = [float(t) for t in np.linspace(-lim, lim, 5)]
    c.axes([round(t, 3) for t in ticks], list(range(1, n_rows + 1)), list(feature_names[:n_rows]))
    c.polyline([0, 0], [0.5, n_rows + 0.5], stroke="#999", width=1)
    for r in range(1, n_rows + 1):
        row = pts[pts[:, 0] == r]
        if not row.size:
            continue
        # deterministic jitter: alternate offsets within the row by SHAP order
        order = np.argsort(row[:, 1], kind="stable")
        offs = ((np.arange(row.shape[0]) % 7) - 3) * 0.06
        for k, j in enumerate(order):
            c.circle(row[j, 1], r + offs[k], r=2.5, fill=_rgb(row[j, 2]), opacity=0.8)
    return _write(c.render(timestamp), path)
