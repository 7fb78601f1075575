"""Minimal static SVG line plots with shaded interval bands."""

from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 360
MARGIN = dict(left=64, right=16, top=36, bottom=48)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Axes:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def py(self, y):
        return self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def points(self, xs, ys):
        return " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot(
    title,
    xlabel,
    ylabel,
    x,
    mean,
    lower=None,
    upper=None,
    scatter=None,
    ylim=None,
) -> str:
    """Return an SVG document: optional band, mean line, optional scatter points."""
    ys = list(mean) + list(lower or []) + list(upper or []) + [p[1] for p in scatter or []]
    if ylim is None:
        lo, hi = min(ys), max(ys)
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        ylim = (lo - pad, hi + pad)
    ax = _Axes((0.0, 1.0), ylim)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    if lower is not None and upper is not None:
        band = ax.points(list(x) + list(x)[::-1], list(upper) + list(lower)[::-1])
        out.append(f'<polygon class="ci-band" points="{band}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>')
    out.append(f'<polyline class="mean" points="{ax.points(x, mean)}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for px, py in scatter or []:
        out.append(f'<circle class="record" cx="{_fmt(ax.px(px))}" cy="{_fmt(ax.py(py))}" r="3" fill="black"/>')

    out.append(
        f'<rect x="{ax.left}" y="{ax.top}" width="{ax.right - ax.left}" height="{ax.bottom - ax.top}" '
        'fill="none" stroke="black"/>'
    )
    for t in _ticks(0.0, 1.0):
        xp = _fmt(ax.px(t))
        out.append(f'<line x1="{xp}" y1="{ax.bottom}" x2="{xp}" y2="{ax.bottom + 4}" stroke="black"/>')
        out.append(f'<text x="{xp}" y="{ax.bottom + 16}" text-anchor="middle">{t:.2f}</text>')
    for t in _ticks(*ylim):
        yp = _fmt(ax.py(t))
        out.append(f'<line x1="{ax.left - 4}" y1="{yp}" x2="{ax.left}" y2="{yp}" stroke="black"/>')
        out.append(f'<text x="{ax.left - 6}" y="{yp}" text-anchor="end" dominant-baseline="middle">{t:.3g}</text>')
    out.append(f'<text x="{(ax.left + ax.right) / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="14" y="{(ax.top + ax.bottom) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(ax.top + ax.bottom) / 2})">{escape(ylabel)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
