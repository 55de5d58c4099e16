"""Deterministic CSV/JSON emission and SVG ratio plots.

All floats are written with 17 significant digits, JSON keys are sorted,
and the SVG painter formats coordinates with fixed precision, so identical
inputs produce identical bytes.
"""

from __future__ import annotations

import json
import math


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path, header, rows):
    """Rows are sequences matching the fixed header order."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


# ----------------------------------------------------------------------
# SVG ratio-vs-h plot

_W, _H = 800, 600
_MARGIN = 70


def _coord(t):
    return f"{t:.4f}"


def emit_plot(series, path):
    """Log-x plot of ratio versus h with the fitted-model overlay.

    ``series`` is a RatioSeries; at least two levels are required.
    """
    rows = series.rows
    if len(rows) < 2:
        raise ValueError("plot needs at least two levels")
    hs = [r["h"] for r in rows]
    ratios = [r["ratio"] for r in rows]
    from .verification import _model_values

    coef = series.fits[series.best_model]["coefficient"]
    fit_vals = [coef * g for g in _model_values(series.best_model, hs)]

    xs = [math.log10(h) for h in hs]
    xmin, xmax = min(xs), max(xs)
    ymin = 0.0
    ymax = max(max(ratios), max(fit_vals)) * 1.15 or 1.0

    def X(x):
        if xmax == xmin:
            return _W / 2
        return _MARGIN + (x - xmin) / (xmax - xmin) * (_W - 2 * _MARGIN)

    def Y(y):
        return _H - _MARGIN - (y - ymin) / (ymax - ymin) * (_H - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{_H - _MARGIN}" x2="{_W - _MARGIN}" '
        f'y2="{_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_H - _MARGIN}" stroke="black"/>',
        f'<text x="{_W // 2}" y="{_H - 20}" text-anchor="middle" '
        f'font-size="14">log10(h)</text>',
        f'<text x="20" y="{_H // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 20 {_H // 2})">ratio</text>',
        f'<text x="{_W // 2}" y="30" text-anchor="middle" font-size="16">'
        f'{series.experiment_id} (fit: {series.best_model}, '
        f'verdict: {series.verdict})</text>',
    ]
    pts = " ".join(f"{_coord(X(x))},{_coord(Y(r))}" for x, r in zip(xs, ratios))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="blue" '
                 f'stroke-width="2"/>')
    for x, r in zip(xs, ratios):
        parts.append(f'<circle cx="{_coord(X(x))}" cy="{_coord(Y(r))}" r="4" '
                     f'fill="blue"/>')
    fpts = " ".join(f"{_coord(X(x))},{_coord(Y(v))}" for x, v in zip(xs, fit_vals))
    parts.append(f'<polyline points="{fpts}" fill="none" stroke="red" '
                 f'stroke-width="1.5" stroke-dasharray="6,4"/>')
    for x, h in zip(xs, hs):
        parts.append(f'<text x="{_coord(X(x))}" y="{_H - _MARGIN + 20}" '
                     f'text-anchor="middle" font-size="11">{h:.5g}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(parts) + "\n")
