"""Deterministic SVG scatter plots for sample files.

The renderer writes plain SVG strings (no plotting library) so identical
input bytes always produce identical output bytes.  The viewport is fixed to
[-1.2, 1.2]^2 with 2-pixel markers; points outside the viewport keep their
marker element but are cropped by a clip path.
"""

from __future__ import annotations

import numpy as np

VIEW_HALF_WIDTH = 1.2
PLOT_PX = 480
MARGIN_PX = 34
MARKER_RADIUS_PX = 1  # 2-pixel diameter


def _to_px(xy: np.ndarray) -> np.ndarray:
    scale = PLOT_PX / (2.0 * VIEW_HALF_WIDTH)
    px = MARGIN_PX + (xy[:, 0] + VIEW_HALF_WIDTH) * scale
    py = MARGIN_PX + (VIEW_HALF_WIDTH - xy[:, 1]) * scale
    return np.stack([px, py], axis=1)


def render_scatter_svg(points, title: str = "") -> str:
    """SVG scatter of (n, 2) points; axes only when the batch is empty."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    size = PLOT_PX + 2 * MARGIN_PX
    lo, hi = MARGIN_PX, MARGIN_PX + PLOT_PX
    mid = MARGIN_PX + PLOT_PX / 2
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<clipPath id="plot"><rect x="{lo}" y="{lo}" width="{PLOT_PX}" height="{PLOT_PX}"/></clipPath>',
        f'<rect x="{lo}" y="{lo}" width="{PLOT_PX}" height="{PLOT_PX}" fill="none" stroke="black" stroke-width="1"/>',
        f'<line x1="{lo}" y1="{mid:.1f}" x2="{hi}" y2="{mid:.1f}" stroke="#cccccc" stroke-width="0.5"/>',
        f'<line x1="{mid:.1f}" y1="{lo}" x2="{mid:.1f}" y2="{hi}" stroke="#cccccc" stroke-width="0.5"/>',
    ]
    for value in (-1.0, 0.0, 1.0):
        t = MARGIN_PX + (value + VIEW_HALF_WIDTH) * PLOT_PX / (2 * VIEW_HALF_WIDTH)
        parts.append(f'<text x="{t:.1f}" y="{hi + 16}" font-size="11" text-anchor="middle">{value:g}</text>')
        ty = MARGIN_PX + (VIEW_HALF_WIDTH - value) * PLOT_PX / (2 * VIEW_HALF_WIDTH)
        parts.append(f'<text x="{lo - 6}" y="{ty + 4:.1f}" font-size="11" text-anchor="end">{value:g}</text>')
    if title:
        parts.append(f'<text x="{size / 2:.1f}" y="{MARGIN_PX - 12}" font-size="13" text-anchor="middle">{title}</text>')
    parts.append('<g clip-path="url(#plot)" fill="#1f4e9c" fill-opacity="0.55">')
    for px, py in _to_px(points):
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{MARKER_RADIUS_PX}"/>')
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_samples_csv(csv_path: str, svg_path: str, title: str | None = None) -> int:
    """Render one sample CSV to SVG; returns the number of markers drawn."""
    from .experiment import _atomic_write, read_samples_csv

    points = read_samples_csv(csv_path)
    if title is None:
        title = csv_path.rsplit("/", 1)[-1].removesuffix(".csv")
    _atomic_write(svg_path, render_scatter_svg(points, title=title))
    return points.shape[0]
