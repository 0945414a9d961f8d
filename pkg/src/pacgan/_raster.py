"""Small anti-aliased rasterization primitives on pixel-center grids."""

import numpy as np


def pixel_grid(size):
    h, w = size
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    return cols, rows


def segment_distance(size, p0, p1):
    """Distance from every pixel center to the segment p0-p1, points given as (col, row)."""
    cols, rows = pixel_grid(size)
    p0 = np.asarray(p0, dtype=np.float64)
    d = np.asarray(p1, dtype=np.float64) - p0
    length2 = float(d @ d)
    if length2 < 1e-12:
        t = np.zeros_like(cols)
    else:
        t = np.clip(((cols - p0[0]) * d[0] + (rows - p0[1]) * d[1]) / length2, 0.0, 1.0)
    dx = cols - (p0[0] + t * d[0])
    dy = rows - (p0[1] + t * d[1])
    return np.hypot(dx, dy)


def coverage(dist, half_width):
    # one-pixel linear ramp at the stroke edge
    return np.clip(half_width + 0.5 - dist, 0.0, 1.0)


def paint(canvas, alpha, color):
    """Alpha-composite a solid color onto an (H, W, 3) canvas in place."""
    a = alpha[..., None]
    canvas *= 1.0 - a
    canvas += a * np.asarray(color, dtype=np.float64)
    return canvas


def hue_rotate(rgb, degrees):
    """Rotate hue about the gray axis; works on any (..., 3) array, result clipped to [0, 1]."""
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    k = 1.0 / 3.0
    r = np.sqrt(k)
    m = np.array(
        [
            [c + (1 - c) * k, k * (1 - c) - r * s, k * (1 - c) + r * s],
            [k * (1 - c) + r * s, c + (1 - c) * k, k * (1 - c) - r * s],
            [k * (1 - c) - r * s, k * (1 - c) + r * s, c + (1 - c) * k],
        ]
    )
    return np.clip(np.asarray(rgb, dtype=np.float64) @ m.T, 0.0, 1.0)


def quantize8(arr):
    """Snap to the 8-bit grid so PNG round trips are exact."""
    return (np.round(np.clip(arr, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)
