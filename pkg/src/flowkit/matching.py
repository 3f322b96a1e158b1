"""Normalized cost volumes over a (2r+1)^2 displacement window and argmax initialization.

These are not differentiated through, so they work on plain numpy arrays.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

SIGMA_FLOOR = 1e-6


def _as_array(x) -> np.ndarray:
    if hasattr(x, "detach"):
        x = x.detach().cpu().numpy()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    return x


def extract_features(image) -> np.ndarray:
    """Colour channels, then per-channel |d/dx|, then |d/dy| (zero in the last column/row)."""
    img = _as_array(image)
    dx = np.zeros_like(img)
    dy = np.zeros_like(img)
    dx[:, :-1] = np.abs(img[:, 1:] - img[:, :-1])
    dy[:-1] = np.abs(img[1:] - img[:-1])
    return np.concatenate([img, dx, dy], axis=-1)


def normalize_features(features) -> np.ndarray:
    """Z-score with one mean and one (population) std over all spatial and feature entries."""
    f = _as_array(features)
    mu = f.mean()
    sigma = f.std()
    return (f - mu) / max(sigma, SIGMA_FLOOR)


def displacements(radius: int) -> list[tuple[int, int]]:
    """(u, v) pairs in cost-volume channel order: v-major, then u."""
    span = range(-radius, radius + 1)
    return [(u, v) for v in span for u in span]


def cost_volume(f1, f2, radius: int = 4) -> np.ndarray:
    """``C[y, x, k] = sum_d f1[y, x, d] * f2[y + v_k, x + u_k, d]``; off-grid samples give 0."""
    f1, f2 = _as_array(f1), _as_array(f2)
    if f1.shape != f2.shape:
        raise ValueError(f"feature shapes differ: {f1.shape} vs {f2.shape}")
    h, w, _ = f1.shape
    r = radius
    padded = np.pad(f2, ((r, r), (r, r), (0, 0)))
    out = np.empty((h, w, (2 * r + 1) ** 2))
    for k, (u, v) in enumerate(displacements(r)):
        shifted = padded[r + v : r + v + h, r + u : r + u + w]
        out[..., k] = np.einsum("ijd,ijd->ij", f1, shifted)
    return out


def argmax_flow(volume) -> np.ndarray:
    """Best displacement per pixel; ties go to smallest |u|+|v|, then v, then u."""
    volume = np.asarray(volume, dtype=np.float64)
    n = volume.shape[-1]
    radius = (int(round(np.sqrt(n))) - 1) // 2
    if (2 * radius + 1) ** 2 != n:
        raise ValueError(f"{n} channels is not a square displacement window")
    disp = np.array(displacements(radius))
    order = sorted(range(n), key=lambda k: (abs(disp[k, 0]) + abs(disp[k, 1]), disp[k, 1], disp[k, 0]))
    order = np.array(order)
    best = order[np.argmax(volume[..., order], axis=-1)]
    return disp[best].astype(np.float64)


def aggregate_cost(volume, window: int) -> np.ndarray:
    """Box-average each displacement slice over a ``window`` x ``window`` neighbourhood.

    A single pixel's inner product is not maximal at the true displacement
    (a neighbour with a larger feature norm can win), so the matcher sums
    correlations over a patch before taking the argmax.
    """
    volume = np.asarray(volume, dtype=np.float64)
    if window <= 1:
        return volume
    return ndimage.uniform_filter(volume, size=(window, window, 1), mode="nearest")


def warped_cost_volume(f1, f2, flow, radius: int = 4) -> np.ndarray:
    """Cost volume against ``f2`` bilinearly warped by ``flow`` (border clamped)."""
    from .image import warp

    warped = warp(_as_array(f2), _as_array(flow)).numpy()
    return cost_volume(f1, warped, radius)
