"""Minimal self-contained SVG log-log plots with embedded data comments."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def loglog_svg(series: dict[str, tuple[list[float], list[float]]], title: str = "", xlabel: str = "h",
               ylabel: str = "error", slopes: list[float] = (), width: int = 520, height: int = 400) -> str:
    """Each series is (x, y); nonpositive values are skipped. Slopes add reference triangles."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(y)]
    left, right, top, bottom = 70, 150, 40, 50
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">']
    for name, (xs, ys) in series.items():
        data = " ".join(f"{x:.17g},{y:.17g}" for x, y in zip(xs, ys))
        out.append(f"<!-- data {escape(name)}: {data} -->")
    out.append(f'<text x="{width / 2}" y="20" text-anchor="middle">{escape(title)}</text>')
    if not pts:
        out.append("</svg>")
        return "\n".join(out)
    lx = [math.log10(p[0]) for p in pts]
    ly = [math.log10(p[1]) for p in pts]
    x0, x1 = math.floor(min(lx) * 10) / 10, math.ceil(max(lx) * 10) / 10
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def X(v):
        return left + (math.log10(v) - x0) / (x1 - x0) * pw

    def Y(v):
        return top + (y1 - math.log10(v)) / (y1 - y0) * ph

    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for e in range(int(y0), int(y1) + 1):
        y = Y(10.0**e)
        out.append(f'<line x1="{left}" x2="{left + pw}" y1="{y:.1f}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    for t in (x0, (x0 + x1) / 2, x1):
        v = 10.0**t
        out.append(f'<text x="{X(v):.1f}" y="{top + ph + 18}" text-anchor="middle">{v:.3g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{top + ph / 2}" transform="rotate(-90 18 {top + ph / 2})" text-anchor="middle">{escape(ylabel)}</text>')
    for i, (name, (xs, ys)) in enumerate(series.items()):
        col = COLORS[i % len(COLORS)]
        good = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and math.isfinite(y)]
        if good:
            path = " ".join(f"{X(x):.1f},{Y(y):.1f}" for x, y in good)
            out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
            for x, y in good:
                out.append(f'<circle cx="{X(x):.1f}" cy="{Y(y):.1f}" r="3" fill="{col}"/>')
        ly_ = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" x2="{left + pw + 30}" y1="{ly_}" y2="{ly_}" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly_ + 4}">{escape(name)}</text>')
    # reference-slope triangles anchored near the lower right of the data
    xa, xb = 10 ** (x0 + 0.15 * (x1 - x0)), 10 ** (x0 + 0.35 * (x1 - x0))
    for j, s in enumerate(slopes):
        yb = 10 ** (y0 + 0.1 * (y1 - y0) + 0.12 * j * (y1 - y0))
        ya = yb * (xa / xb) ** s
        if ya <= 0:
            continue
        tri = f"{X(xa):.1f},{Y(ya):.1f} {X(xb):.1f},{Y(yb):.1f} {X(xb):.1f},{Y(ya):.1f}"
        out.append(f'<polygon points="{tri}" fill="none" stroke="#555" stroke-dasharray="3,2"/>')
        out.append(f'<text x="{X(xb) + 4:.1f}" y="{(Y(ya) + Y(yb)) / 2:.1f}" fill="#555">{s:g}</text>')
    out.append("</svg>")
    return "\n".join(out)
