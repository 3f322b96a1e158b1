"""Flow colour coding: hue is direction, saturation is magnitude, zero flow is white."""

from __future__ import annotations

import numpy as np
from matplotlib.colors import hsv_to_rgb


def flow_to_color(flow, max_magnitude: float | None = None) -> np.ndarray:
    """Return an (H, W, 3) image in [-1, 1]."""
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(mag.max())
    scale = max_magnitude if max_magnitude > 0 else 1.0
    hue = (np.arctan2(v, u) / (2 * np.pi)) % 1.0
    sat = np.clip(mag / scale, 0.0, 1.0)
    rgb = hsv_to_rgb(np.stack([hue, sat, np.ones_like(hue)], axis=-1))
    return rgb * 2 - 1
