"""Minimal static SVG plots: ROC curves, Manhattan plots and PC scatter panels."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000")

WIDTH, HEIGHT, MARGIN = 640, 400, 50


def _header(width=WIDTH, height=HEIGHT) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _scale(v, lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return a + (np.asarray(v, dtype=float) - lo) / span * (b - a)


def _axes(lines, xlabel, ylabel, width=WIDTH, height=HEIGHT):
    x0, x1, y0, y1 = MARGIN, width - MARGIN / 2, height - MARGIN, MARGIN / 2
    lines.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    lines.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    lines.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    lines.append(
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>'
    )
    return x0, x1, y0, y1


def roc_svg(curves: dict, path=None, title: str = "ROC") -> str:
    """One polyline per curve; ``curves`` maps a label to an object with ``fpr``/``tpr``."""
    lines = _header()
    x0, x1, y0, y1 = _axes(lines, "1 - specificity", "sensitivity")
    lines.append(f'<line class="diagonal" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#bbbbbb" stroke-dasharray="4 4"/>')
    for k, (label, c) in enumerate(curves.items()):
        xs = _scale(c.fpr, 0, 1, x0, x1)
        ys = _scale(c.tpr, 0, 1, y0, y1)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
        color = PALETTE[k % len(PALETTE)]
        lines.append(f'<polyline class="roc" data-label="{escape(str(label))}" fill="none" stroke="{color}" points="{pts}"/>')
        lines.append(f'<text x="{x1 - 150}" y="{y0 - 15 - 14 * k}" font-size="11" fill="{color}">{escape(str(label))}</text>')
    lines.append(f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>')
    lines.append("</svg>")
    return _finish(lines, path)


def manhattan_svg(positions, neg_log10_p, causal_position=None, path=None, title: str = "Manhattan") -> str:
    """Points at (position, -log10 p) with a red vertical line at the causal SNP."""
    pos = np.asarray(positions, dtype=float)
    score = np.asarray(neg_log10_p, dtype=float)
    lines = _header()
    x0, x1, y0, y1 = _axes(lines, "position (bp)", "-log10(p)")
    lo, hi = (pos.min(), pos.max()) if pos.size else (0.0, 1.0)
    top = max(float(np.nanmax(score)) if score.size else 1.0, 1.0)
    xs = _scale(pos, lo, hi, x0, x1)
    ys = _scale(np.nan_to_num(score), 0, top * 1.05, y0, y1)
    for a, b in zip(xs, ys):
        lines.append(f'<circle class="snp" cx="{a:.2f}" cy="{b:.2f}" r="1.5" fill="#1f77b4"/>')
    if causal_position is not None:
        cx = float(_scale(causal_position, lo, hi, x0, x1))
        lines.append(
            f'<line class="causal" data-position="{int(causal_position)}" x1="{cx:.2f}" y1="{y0}" '
            f'x2="{cx:.2f}" y2="{y1}" stroke="red"/>'
        )
    lines.append(f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>')
    lines.append("</svg>")
    return _finish(lines, path)


def scatter_svg(x, y, groups, path=None, xlabel: str = "pc1", ylabel: str = "pc2") -> str:
    lines = _header()
    x0, x1, y0, y1 = _axes(lines, xlabel, ylabel)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs = _scale(x, x.min(), x.max(), x0, x1)
    ys = _scale(y, y.min(), y.max(), y0, y1)
    levels = sorted(set(groups))
    color = {g: PALETTE[i % len(PALETTE)] for i, g in enumerate(levels)}
    for a, b, g in zip(xs, ys, groups):
        lines.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2" fill="{color[g]}"/>')
    for i, g in enumerate(levels):
        lines.append(f'<text x="{x1 - 60}" y="{y1 + 12 + 12 * i}" font-size="10" fill="{color[g]}">{escape(str(g))}</text>')
    lines.append("</svg>")
    return _finish(lines, path)


def _finish(lines, path):
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
