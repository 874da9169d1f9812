"""Static SVG scatter of (resource, fidelity) with the Pareto front highlighted."""

from __future__ import annotations

from typing import Sequence

from .search import Candidate

WIDTH, HEIGHT, MARGIN = 560, 400, 56


def _scale(v, lo, hi, a, b):
    if hi == lo:
        return (a + b) / 2
    return a + (v - lo) * (b - a) / (hi - lo)


def front_svg(evaluated: Sequence[Candidate], front: Sequence[Candidate], title: str = "") -> str:
    pts = list(evaluated) + list(front)
    if pts:
        x_lo, x_hi = min(c.f2 for c in pts), max(c.f2 for c in pts)
        y_lo, y_hi = min(c.f1 for c in pts), max(c.f1 for c in pts)
    else:
        x_lo = x_hi = y_lo = y_hi = 0.0
    x0, x1 = MARGIN, WIDTH - MARGIN // 2
    y0, y1 = HEIGHT - MARGIN, MARGIN // 2

    def xy(c):
        return _scale(c.f2, x_lo, x_hi, x0, x1), _scale(c.f1, y_lo, y_hi, y0, y1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle">resource</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">fidelity</text>',
        f'<text x="{x0}" y="{y0 + 14}">{x_lo:g}</text>',
        f'<text x="{x1}" y="{y0 + 14}" text-anchor="end">{x_hi:g}</text>',
        f'<text x="{x0 - 4}" y="{y0}" text-anchor="end">{y_lo:.3f}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 4}" text-anchor="end">{y_hi:.3f}</text>',
    ]
    if title:
        out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="16" text-anchor="middle">{title}</text>')
    for c in evaluated:
        x, y = xy(c)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2" fill="#999999"/>')
    ordered = sorted(front, key=lambda c: c.f2)
    if len(ordered) > 1:
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(xy, ordered))
        out.append(f'<polyline points="{path}" fill="none" stroke="#c0392b"/>')
    for c in ordered:
        x, y = xy(c)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="#c0392b">'
                   f'<title>{c.cfg} f1={c.f1:.6f} f2={c.f2:g}</title></circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
