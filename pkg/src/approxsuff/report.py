"""Deterministic CSV, JSON and SVG writers."""

from __future__ import annotations

import csv
import json
import math
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if hasattr(x, "item"):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def line_chart(path, series, title: str, xlabel: str, ylabel: str, *, logx: bool = False,
               hline: tuple[float, str] | None = None, width: int = 640, height: int = 400) -> None:
    """Write a static line chart.

    ``series`` is a list of ``(label, xs, ys)``; non-finite points are
    skipped.  ``hline`` draws a dashed reference line ``(y, label)``.
    """
    left, right, top, bottom = 70, 160, 40, 50
    pw, ph = width - left - right, height - top - bottom
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    pts = [(tx(x), y) for _, xs, ys in series for x, y in zip(xs, ys)
           if math.isfinite(y) and (x > 0 or not logx)]
    ys_all = [p[1] for p in pts] + ([hline[0]] if hline else [])
    if not pts:
        pts, ys_all = [(0.0, 0.0), (1.0, 1.0)], [0.0, 1.0]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for v in _ticks(x0, x1):
        lab = f"{10 ** v:.4g}" if logx else f"{v:.4g}"
        out.append(f'<line x1="{_fmt(sx(v))}" y1="{top + ph}" x2="{_fmt(sx(v))}" y2="{top + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{_fmt(sx(v))}" y="{top + ph + 18}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<line x1="{left - 5}" y1="{_fmt(sy(v))}" x2="{left}" y2="{_fmt(sy(v))}" stroke="#444"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(sy(v) + 4)}" text-anchor="end">{v:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    if hline:
        y = sy(hline[0])
        out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" '
                   'stroke="#888" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{left + pw + 6}" y="{_fmt(y + 4)}" fill="#666">{escape(hline[1])}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        xy = [(sx(tx(x)), sy(y)) for x, y in zip(xs, ys) if math.isfinite(y) and (x > 0 or not logx)]
        if xy:
            path_d = " ".join(f"{'M' if j == 0 else 'L'}{_fmt(a)},{_fmt(b)}" for j, (a, b) in enumerate(xy))
            out.append(f'<path d="{path_d}" fill="none" stroke="{color}" stroke-width="2"/>')
            out.extend(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{color}"/>' for a, b in xy)
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 8}" y1="{ly}" x2="{left + pw + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 28}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
