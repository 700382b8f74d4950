"""Minimal deterministic SVG chart emitters.

Hand-rolled rendering keeps the byte stream a pure function of the data:
no timestamps, no library version strings, fixed float formatting.
"""

from __future__ import annotations

import numpy as np

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 20, 36, 46


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _num(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


class _Canvas:
    def __init__(self, x_range, y_range, title, xlabel, ylabel):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W / 2:.0f}" y="22" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>',
        ]
        self._axes(xlabel, ylabel)

    def px(self, x):
        return _ML + (x - self.x0) / (self.x1 - self.x0) * (_W - _ML - _MR)

    def py(self, y):
        return _H - _MB - (y - self.y0) / (self.y1 - self.y0) * (_H - _MT - _MB)

    def _axes(self, xlabel, ylabel):
        p = self.parts
        p.append(
            f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
            f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>'
        )
        for t in _ticks(self.x0, self.x1):
            x = self.px(t)
            p.append(
                f'<line x1="{_fmt(x)}" y1="{_H - _MB}" x2="{_fmt(x)}" '
                f'y2="{_H - _MB + 5}" stroke="black"/>'
            )
            p.append(
                f'<text x="{_fmt(x)}" y="{_H - _MB + 18}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{_num(t)}</text>'
            )
        for t in _ticks(self.y0, self.y1):
            y = self.py(t)
            p.append(
                f'<line x1="{_ML - 5}" y1="{_fmt(y)}" x2="{_ML}" '
                f'y2="{_fmt(y)}" stroke="black"/>'
            )
            p.append(
                f'<text x="{_ML - 8}" y="{_fmt(y + 4)}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{_num(t)}</text>'
            )
        p.append(
            f'<text x="{_W / 2:.0f}" y="{_H - 10}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{xlabel}</text>'
        )
        p.append(
            f'<text x="16" y="{_H / 2:.0f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {_H / 2:.0f})">{ylabel}</text>'
        )

    def polyline(self, xs, ys, color, dash="", width=1.5):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{dash_attr}/>'
        )

    def polygon(self, xs, ys, fill, opacity=0.25):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        self.parts.append(
            f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>'
        )

    def dots(self, xs, ys, color, r=3.0):
        for x, y in zip(xs, ys):
            self.parts.append(
                f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" '
                f'r="{r}" fill="{color}"/>'
            )

    def hline(self, y, color, dash="6,4"):
        self.parts.append(
            f'<line x1="{_ML}" y1="{_fmt(self.py(y))}" x2="{_W - _MR}" '
            f'y2="{_fmt(self.py(y))}" stroke="{color}" stroke-dasharray="{dash}"/>'
        )

    def label(self, x, y, text, color="black"):
        self.parts.append(
            f'<text x="{_fmt(self.px(x))}" y="{_fmt(self.py(y) - 6)}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="10" '
            f'fill="{color}">{text}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def prediction_band_chart(mean, sd, truth=None, title="Predictions",
                          z: float = 1.96) -> str:
    """Index plot of predictions with mean +- z * sd bands and optional
    observed values."""
    mean = np.asarray(mean, float)
    sd = np.asarray(sd, float)
    idx = np.arange(1, len(mean) + 1)
    lo, hi = mean - z * sd, mean + z * sd
    ymin = min(lo.min(), truth.min() if truth is not None else np.inf)
    ymax = max(hi.max(), truth.max() if truth is not None else -np.inf)
    pad = 0.05 * (ymax - ymin or 1.0)
    cv = _Canvas((1, len(mean)), (ymin - pad, ymax + pad), title, "index", "value")
    cv.polygon(np.concatenate([idx, idx[::-1]]), np.concatenate([hi, lo[::-1]]), "#9aa7b5")
    cv.polyline(idx, lo, "#55606e", dash="5,4", width=1.0)
    cv.polyline(idx, hi, "#55606e", dash="5,4", width=1.0)
    cv.polyline(idx, mean, "#46627f")
    cv.dots(idx, mean, "#46627f", r=2.4)
    if truth is not None:
        cv.polyline(idx, np.asarray(truth, float), "black", width=1.2)
    return cv.render()


def influence_index_chart(m0, benchmark, title) -> str:
    """Stem plot of per-observation influence with the benchmark line;
    flagged observations are labelled with their (1-based) index."""
    m0 = np.asarray(m0, float)
    idx = np.arange(1, len(m0) + 1)
    top = max(m0.max(), benchmark) * 1.15
    cv = _Canvas((0, len(m0) + 1), (0.0, top), title, "observation index", "M(0)")
    for i, v in zip(idx, m0):
        x = cv.px(i)
        cv.parts.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(cv.py(0.0))}" x2="{_fmt(x)}" '
            f'y2="{_fmt(cv.py(v))}" stroke="#777777" stroke-width="1"/>'
        )
    cv.dots(idx, m0, "#333333", r=2.0)
    cv.hline(benchmark, "#aa3333")
    for i, v in zip(idx, m0):
        if v > benchmark:
            cv.label(i, v, str(i), color="#aa3333")
    return cv.render()


def _gray(v: float) -> str:
    g = int(round(255 * (1.0 - 0.85 * v)))
    return f"rgb({g},{g},{g})"


def intensity_chart(xs, ys, values, title, points=None) -> str:
    """Grayscale cell grid over a regular lattice of target coordinates."""
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    grid = np.asarray(values, float).reshape(len(ys), len(xs))
    vmin, vmax = float(grid.min()), float(grid.max())
    span = vmax - vmin or 1.0
    dx = xs[1] - xs[0] if len(xs) > 1 else 1.0
    dy = ys[1] - ys[0] if len(ys) > 1 else 1.0
    cv = _Canvas(
        (xs[0] - dx / 2, xs[-1] + dx / 2),
        (ys[0] - dy / 2, ys[-1] + dy / 2),
        f"{title} [{_num(vmin)}, {_num(vmax)}]",
        "x",
        "y",
    )
    for j, yv in enumerate(ys):
        for i, xv in enumerate(xs):
            x0 = cv.px(xv - dx / 2)
            y0 = cv.py(yv + dy / 2)
            w = cv.px(xv + dx / 2) - x0
            h = cv.py(yv - dy / 2) - y0
            fill = _gray((grid[j, i] - vmin) / span)
            cv.parts.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" '
                f'height="{_fmt(h)}" fill="{fill}"/>'
            )
    if points is not None:
        cv.dots(points[:, 0], points[:, 1], "#aa3333", r=2.0)
    return cv.render()


def variogram_chart(centers, gamma, curve_h=None, curve_gamma=None,
                    title="Empirical variogram") -> str:
    """Binned semivariances as points, optional fitted curve as a line."""
    centers = np.asarray(centers, float)
    gamma = np.asarray(gamma, float)
    ymax = gamma.max()
    if curve_gamma is not None:
        ymax = max(ymax, float(np.max(curve_gamma)))
    cv = _Canvas(
        (0.0, float(centers.max()) * 1.05),
        (0.0, ymax * 1.1),
        title,
        "distance",
        "semivariance",
    )
    if curve_h is not None and curve_gamma is not None:
        cv.polyline(curve_h, curve_gamma, "black", width=1.5)
    cv.dots(centers, gamma, "#46627f", r=3.2)
    return cv.render()
