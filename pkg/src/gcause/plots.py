"""Small hand-written SVG figures.

The output is plain text with fixed number formatting, so identical inputs
give identical files and tests can compare them directly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

CLEAN_COLOR = "#1f77b4"
INTERVENED_COLOR = "#ff7f0e"
PANEL_W, PANEL_H, MARGIN = 260, 180, 30


def _f(x: float) -> str:
    return f"{x:.2f}"


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="start", size=None) -> str:
    extra = f' font-size="{size}"' if size else ""
    return f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}>{escape(str(s))}</text>'


def histogram_bins(samples: Sequence[np.ndarray], bins: int = 20, upper_quantile: float = 0.99) -> np.ndarray:
    """Shared bin edges from 0 to a high pooled quantile; relative residuals have long tails."""
    pooled = np.concatenate([np.asarray(s, dtype=float).ravel() for s in samples])
    hi = float(np.quantile(pooled, upper_quantile)) if pooled.size else 1.0
    if not hi > 0:
        hi = 1.0
    return np.linspace(0.0, hi, bins + 1)


def _panel(x0: float, y0: float, clean: np.ndarray, tilde: np.ndarray, edges: np.ndarray,
           title: str) -> list[str]:
    w, h = PANEL_W - 2 * MARGIN, PANEL_H - 2 * MARGIN
    # values beyond the last edge land in the last bin
    c = np.histogram(np.clip(clean, edges[0], edges[-1]), edges)[0] / max(len(clean), 1)
    t = np.histogram(np.clip(tilde, edges[0], edges[-1]), edges)[0] / max(len(tilde), 1)
    top = max(float(c.max(initial=0)), float(t.max(initial=0)), 1e-12)
    out = [_text(x0 + PANEL_W / 2, y0 + 16, title, "middle")]
    bx, by = x0 + MARGIN, y0 + MARGIN
    out.append(f'<rect x="{_f(bx)}" y="{_f(by)}" width="{w}" height="{h}" fill="none" stroke="#888"/>')
    bw = w / (len(edges) - 1)
    for series, color in ((c, CLEAN_COLOR), (t, INTERVENED_COLOR)):
        for k, v in enumerate(series):
            if v <= 0:
                continue
            bh = h * v / top
            out.append(f'<rect x="{_f(bx + k * bw)}" y="{_f(by + h - bh)}" width="{_f(bw)}" '
                       f'height="{_f(bh)}" fill="{color}" fill-opacity="0.5"/>')
    out.append(_text(bx, by + h + 14, _f(edges[0])))
    out.append(_text(bx + w, by + h + 14, _f(edges[-1]), "end"))
    return out


def residual_histogram_svg(title: str, node_names: Sequence[str], clean: np.ndarray, tilde: np.ndarray,
                           pvalues: Sequence[float], bins: int = 20) -> str:
    """One panel per target node; ``clean``/``tilde`` are ``(n_windows, n_nodes)``."""
    clean, tilde = np.atleast_2d(clean), np.atleast_2d(tilde)
    k = clean.shape[1]
    width, height = PANEL_W * k, PANEL_H + 40
    body = [_text(width / 2, 18, title, "middle", 13)]
    for i in range(k):
        edges = histogram_bins([clean[:, i], tilde[:, i]], bins)
        body += _panel(PANEL_W * i, 24, clean[:, i], tilde[:, i], edges,
                       f"{node_names[i]}  p={pvalues[i]:.3g}")
    body.append(f'<rect x="10" y="{height - 14}" width="10" height="10" fill="{CLEAN_COLOR}" fill-opacity="0.5"/>')
    body.append(_text(24, height - 5, "observed context"))
    body.append(f'<rect x="140" y="{height - 14}" width="10" height="10" fill="{INTERVENED_COLOR}" fill-opacity="0.5"/>')
    body.append(_text(154, height - 5, "knockoff context"))
    return _svg(width, height, body)


def series_svg(values: np.ndarray, names: Sequence[str], max_points: int = 500) -> str:
    """Stacked line plots, one row per variable, of the first ``max_points`` rows."""
    values = np.asarray(values, dtype=float)[:max_points]
    T, N = values.shape
    row_h, width = 70, 640
    body = []
    for j in range(N):
        col = values[:, j]
        lo, hi = float(col.min()), float(col.max())
        span = hi - lo if hi > lo else 1.0
        y0 = 10 + j * row_h
        xs = 40 + np.arange(T) * (width - 50) / max(T - 1, 1)
        ys = y0 + (row_h - 15) * (1 - (col - lo) / span)
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{CLEAN_COLOR}" stroke-width="0.8"/>')
        body.append(_text(4, y0 + row_h / 2, names[j]))
    return _svg(width, 10 + N * row_h, body)


def correlation_svg(corr: np.ndarray, labels: Sequence[str], title: str = "") -> str:
    """Heatmap of a correlation matrix, blue for negative and red for positive."""
    corr = np.asarray(corr, dtype=float)
    n = corr.shape[0]
    cell, off = 28, 60
    size = off + n * cell + 10
    body = [_text(size / 2, 16, title, "middle", 13)] if title else []
    for i in range(n):
        body.append(_text(off - 4, off + i * cell + cell * 0.65, labels[i], "end", 9))
        body.append(_text(off + i * cell + cell / 2, off - 6, labels[i], "middle", 9))
        for j in range(n):
            v = float(np.clip(corr[i, j], -1, 1))
            shade = int(round(255 * (1 - abs(v))))
            color = f"#ff{shade:02x}{shade:02x}" if v >= 0 else f"#{shade:02x}{shade:02x}ff"
            body.append(f'<rect x="{off + j * cell}" y="{off + i * cell}" width="{cell}" height="{cell}" '
                        f'fill="{color}" stroke="#ccc"/>')
    return _svg(size, size, body)


def write_svg(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
