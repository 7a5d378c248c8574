"""Self-contained output artifacts: lossless PNG grids and SVG line plots.

No external imaging or plotting dependency; byte-deterministic output.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_png(path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as a lossless RGB PNG."""
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("write_png expects an (H, W, 3) uint8 array")
    h, w = rgb.shape[:2]
    raw = b"".join(b"\x00" + rgb[r].tobytes() for r in range(h))
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    blob = (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(raw, 6))
        + _png_chunk(b"IEND", b"")
    )
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


def image_grid(row_groups, pad: int = 1, pad_value: float = 1.0) -> np.ndarray:
    """Stack rows of float images in [0,1] into one uint8 grid.

    ``row_groups`` is a list of arrays shaped (N, H, W, 3); every row must
    share N, H, W.
    """
    rows = [np.asarray(g, dtype=np.float64) for g in row_groups]
    if not rows:
        raise ValueError("image_grid needs at least one row")
    n, h, w, _ = rows[0].shape
    grid_h = len(rows) * (h + pad) + pad
    grid_w = n * (w + pad) + pad
    grid = np.full((grid_h, grid_w, 3), pad_value)
    for r, group in enumerate(rows):
        if group.shape != rows[0].shape:
            raise ValueError("all grid rows must share one shape")
        for c in range(n):
            top = pad + r * (h + pad)
            left = pad + c * (w + pad)
            grid[top : top + h, left : left + w] = np.clip(group[c], 0.0, 1.0)
    return (grid * 255.0 + 0.5).astype(np.uint8)


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def line_plot_svg(path, series, xlabel: str, ylabel: str, title: str,
                  width: int = 640, height: int = 480) -> None:
    """Plot line series as a standalone SVG.

    ``series`` is a list of dicts with keys ``label``, ``xs``, ``ys`` and
    optional ``dashed``. Points are drawn as small circles.
    """
    ml, mr, mt, mb = 70, 20, 40, 55
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = [x for s in series for x in s["xs"]]
    ys_all = [y for s in series for y in s["ys"]]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = x_lo - 0.04 * (x_hi - x_lo), x_hi + 0.04 * (x_hi - x_lo)
    y_lo, y_hi = y_lo - 0.06 * (y_hi - y_lo), y_hi + 0.06 * (y_hi - y_lo)

    def px(x):
        return ml + pw * (x - x_lo) / (x_hi - x_lo)

    def py(y):
        return mt + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    out.append(
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>'
    )
    for tx in _ticks(x_lo, x_hi):
        out.append(
            f'<line x1="{px(tx):.2f}" y1="{mt + ph}" x2="{px(tx):.2f}" '
            f'y2="{mt + ph + 5}" stroke="#444"/>'
        )
        out.append(
            f'<text x="{px(tx):.2f}" y="{mt + ph + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{tx:.3g}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{ml - 5}" y1="{py(ty):.2f}" x2="{ml}" y2="{py(ty):.2f}" stroke="#444"/>'
        )
        out.append(
            f'<text x="{ml - 9}" y="{py(ty) + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{ty:.3g}</text>'
        )
    out.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{ylabel}</text>'
    )
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s["xs"], s["ys"]))
        dash = ' stroke-dasharray="6,4"' if s.get("dashed") else ""
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>'
        )
        for x, y in zip(s["xs"], s["ys"]):
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        ly = mt + 16 + 16 * i
        out.append(
            f'<line x1="{ml + pw - 130}" y1="{ly - 4}" x2="{ml + pw - 104}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.8"{dash}/>'
        )
        out.append(
            f'<text x="{ml + pw - 98}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{s["label"]}</text>'
        )
    out.append("</svg>")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("\n".join(out) + "\n")
    os.replace(tmp, path)
