"""Minimal SVG plots: scatter points, polylines and axes with tick labels."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 360
MARGIN = dict(left=64, right=16, top=28, bottom=48)
PALETTE = ("#1f77b4", "#d62728", "#7f7f7f", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    return np.arange(np.ceil(lo / step) * step, hi + 0.5 * step, step)


class Figure:
    """Accumulates layers, then renders one SVG document."""

    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = "", logy: bool = False):
        self.title, self.xlabel, self.ylabel, self.logy = title, xlabel, ylabel, logy
        self.layers = []

    def scatter(self, x, y, color=None, radius: float = 2.0, label: str = ""):
        self.layers.append(("scatter", np.asarray(x, float), np.asarray(y, float), color, radius, label))
        return self

    def line(self, x, y, color=None, width: float = 1.5, dashed: bool = False, label: str = ""):
        self.layers.append(("line", np.asarray(x, float), np.asarray(y, float), color, (width, dashed), label))
        return self

    def _y(self, y):
        return np.log10(np.clip(y, 1e-300, None)) if self.logy else y

    def render(self) -> str:
        xs = np.concatenate([l[1] for l in self.layers]) if self.layers else np.zeros(1)
        ys = np.concatenate([self._y(l[2]) for l in self.layers]) if self.layers else np.zeros(1)
        ok = np.isfinite(xs) & np.isfinite(ys)
        x0, x1 = (xs[ok].min(), xs[ok].max()) if ok.any() else (0.0, 1.0)
        y0, y1 = (ys[ok].min(), ys[ok].max()) if ok.any() else (0.0, 1.0)
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1
        pad = 0.04 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad
        L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]

        def px(x):
            return L + (x - x0) / (x1 - x0) * (R - L)

        def py(y):
            return B - (y - y0) / (y1 - y0) * (B - T)

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>',
        ]
        for t in _ticks(x0, x1):
            out.append(f'<line x1="{px(t):.2f}" y1="{B}" x2="{px(t):.2f}" y2="{B + 4}" stroke="black"/>')
            out.append(f'<text x="{px(t):.2f}" y="{B + 16}" text-anchor="middle">{t:.4g}</text>')
        for t in _ticks(y0, y1):
            lab = f"1e{t:.3g}" if self.logy else f"{t:.4g}"
            out.append(f'<line x1="{L - 4}" y1="{py(t):.2f}" x2="{L}" y2="{py(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{L - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{lab}</text>')
        out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(
            f'<text x="14" y="{(T + B) / 2}" text-anchor="middle" transform="rotate(-90 14 {(T + B) / 2})">{escape(self.ylabel)}</text>'
        )
        out.append(f'<text x="{(L + R) / 2}" y="18" text-anchor="middle" font-size="13">{escape(self.title)}</text>')
        legend = []
        for k, (kind, x, y, color, style, label) in enumerate(self.layers):
            color = color or PALETTE[k % len(PALETTE)]
            y = self._y(y)
            keep = np.isfinite(x) & np.isfinite(y)
            if kind == "scatter":
                for a, b in zip(x[keep], y[keep]):
                    out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="{style}" fill="{color}"/>')
            else:
                width, dashed = style
                pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[keep], y[keep]))
                dash = ' stroke-dasharray="5,4"' if dashed else ""
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{dash}/>')
            if label:
                legend.append((label, color))
        for k, (label, color) in enumerate(legend):
            y = T + 14 + 14 * k
            out.append(f'<rect x="{R - 120}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{R - 106}" y="{y + 1}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())
