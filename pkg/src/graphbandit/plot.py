"""Minimal static SVG line charts (mean line plus stderr band).

Hand-rolled on purpose: output is a deterministic text file with fixed
float formatting, suitable for byte-comparison across reruns.
"""

from __future__ import annotations

import numpy as np

_WIDTH, _HEIGHT = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 62, 16, 28, 44

_COLORS = ("#1f6fb4", "#d35f00", "#2e8b57", "#a03070")


def _fmt(v: float) -> str:
    return format(float(v), ".3f")


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, count)
    return raw


def svg_regret_chart(title: str, xlabel: str, ylabel: str, series) -> str:
    """Chart text for ``series`` = [(label, x, mean, stderr-or-None), ...]."""
    series = [(label, np.asarray(x, float), np.asarray(m, float),
               None if s is None else np.asarray(s, float))
              for label, x, m, s in series]
    x_lo = min(float(x.min()) for _, x, _, _ in series)
    x_hi = max(float(x.max()) for _, x, _, _ in series)
    y_lo, y_hi = np.inf, -np.inf
    for _, _, m, s in series:
        lo = m if s is None else m - s
        hi = m if s is None else m + s
        y_lo = min(y_lo, float(np.min(lo)))
        y_hi = max(y_hi, float(np.max(hi)))
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    inner_w = _WIDTH - _MARGIN_L - _MARGIN_R
    inner_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x):
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo or 1.0) * inner_w

    def py(y):
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    axis = (
        f'M {_fmt(_MARGIN_L)} {_fmt(_MARGIN_T)} '
        f'L {_fmt(_MARGIN_L)} {_fmt(_HEIGHT - _MARGIN_B)} '
        f'L {_fmt(_WIDTH - _MARGIN_R)} {_fmt(_HEIGHT - _MARGIN_B)}'
    )
    parts.append(f'<path d="{axis}" stroke="#333" fill="none" stroke-width="1"/>')
    for xv in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{_fmt(px(xv))}" y="{_HEIGHT - _MARGIN_B + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{xv:.6g}</text>'
        )
    for yv in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{_fmt(py(yv) + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{yv:.6g}</text>'
        )
    parts.append(
        f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{_HEIGHT / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {_HEIGHT / 2:.0f})">{ylabel}</text>'
    )
    for k, (label, x, m, s) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        if s is not None:
            top = [(px(xv), py(yv)) for xv, yv in zip(x, m + s)]
            bot = [(px(xv), py(yv)) for xv, yv in zip(x[::-1], (m - s)[::-1])]
            ring = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in top + bot)
            parts.append(f'<polygon points="{ring}" fill="{color}" opacity="0.18"/>')
        pts = " ".join(f"{_fmt(px(xv))},{_fmt(py(yv))}" for xv, yv in zip(x, m))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>'
        )
        ly = _MARGIN_T + 16 + 16 * k
        parts.append(
            f'<rect x="{_WIDTH - _MARGIN_R - 150}" y="{ly - 9}" width="12" height="4" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_WIDTH - _MARGIN_R - 132}" y="{ly - 3}" font-family="sans-serif" '
            f'font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_svg(text: str, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
