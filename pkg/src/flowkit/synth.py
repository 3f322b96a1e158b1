"""Synthetic image pairs with analytic flow and occlusion ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

MOTIONS = ("translation", "affine", "two_layer")


@dataclass
class SyntheticPair:
    image1: np.ndarray
    image2: np.ndarray
    true_flow: np.ndarray
    true_occlusion: np.ndarray  # 1 = pixel of image1 has no correspondence in image2
    seed: int


def band_limited_texture(rng: np.random.Generator, height: int, width: int, channels: int = 3,
                         sigma: float = 1.5) -> np.ndarray:
    """Gaussian-filtered white noise rescaled per channel to span [-1, 1]."""
    noise = rng.standard_normal((height, width, channels))
    tex = ndimage.gaussian_filter(noise, sigma=(sigma, sigma, 0), mode="reflect")
    lo = tex.min(axis=(0, 1), keepdims=True)
    hi = tex.max(axis=(0, 1), keepdims=True)
    return 2 * (tex - lo) / (hi - lo) - 1


def sample(texture: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup of a (H, W, C) texture at real coordinates (no clamping needed inside)."""
    coords = np.stack([ys, xs])
    return np.stack(
        [ndimage.map_coordinates(texture[..., c], coords, order=1, mode="nearest")
         for c in range(texture.shape[-1])],
        axis=-1,
    )


def _grid(height: int, width: int):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return xs, ys


def _translation(rng, shape, displacement, channels):
    h, w = shape
    tu, tv = displacement if displacement is not None else tuple(rng.integers(-6, 7, size=2))
    tu, tv = float(tu), float(tv)
    margin = int(np.ceil(max(abs(tu), abs(tv)))) + 2
    if max(abs(tu), abs(tv)) >= min(h, w) / 2:
        raise ValueError(f"displacement ({tu}, {tv}) exceeds the {h}x{w} frame margins")
    tex = band_limited_texture(rng, h + 2 * margin, w + 2 * margin, channels)
    xs, ys = _grid(h, w)
    image1 = sample(tex, xs + margin, ys + margin)
    image2 = sample(tex, xs + margin - tu, ys + margin - tv)
    flow = np.zeros((h, w, 2))
    flow[..., 0] = tu
    flow[..., 1] = tv
    return image1, image2, flow, np.zeros((h, w))


def _affine(rng, shape, matrix, channels):
    h, w = shape
    if matrix is None:
        a = np.eye(2) + rng.uniform(-0.03, 0.03, size=(2, 2))
        t = rng.uniform(-3, 3, size=2)
    else:
        matrix = np.asarray(matrix, dtype=np.float64)
        a, t = matrix[:, :2], matrix[:, 2]
    xs, ys = _grid(h, w)
    cx, cy = (w - 1) / 2, (h - 1) / 2
    # motion about the image centre: p' = A (p - c) + c + t
    x2 = a[0, 0] * (xs - cx) + a[0, 1] * (ys - cy) + cx + t[0]
    y2 = a[1, 0] * (xs - cx) + a[1, 1] * (ys - cy) + cy + t[1]
    flow = np.stack([x2 - xs, y2 - ys], axis=-1)
    reach = np.abs(flow).max()
    if reach >= min(h, w) / 4:
        raise ValueError(f"affine motion reaches {reach:.1f} px, too large for {h}x{w}")
    margin = int(np.ceil(reach)) + 2
    tex = band_limited_texture(rng, h + 2 * margin, w + 2 * margin, channels)
    image1 = sample(tex, xs + margin, ys + margin)
    inv = np.linalg.inv(a)
    bx = xs - cx - t[0]
    by = ys - cy - t[1]
    sx = inv[0, 0] * bx + inv[0, 1] * by + cx
    sy = inv[1, 0] * bx + inv[1, 1] * by + cy
    image2 = sample(tex, sx + margin, sy + margin)
    return image1, image2, flow, np.zeros((h, w))


def _two_layer(rng, shape, displacement, square, channels):
    h, w = shape
    du, dv = (4, 0) if displacement is None else displacement
    du, dv = int(du), int(dv)
    size = square if square is not None else min(h, w) // 3
    if size + abs(du) + 4 > w or size + abs(dv) + 4 > h:
        raise ValueError(f"square {size} moving ({du}, {dv}) does not fit {h}x{w}")
    x0 = int(rng.integers(2 + max(0, -du), w - size - 2 - max(0, du) + 1))
    y0 = int(rng.integers(2 + max(0, -dv), h - size - 2 - max(0, dv) + 1))
    background = band_limited_texture(rng, h, w, channels)
    fg = band_limited_texture(rng, size, size, channels, sigma=1.0)
    image1 = background.copy()
    image2 = background.copy()
    image1[y0 : y0 + size, x0 : x0 + size] = fg
    image2[y0 + dv : y0 + dv + size, x0 + du : x0 + du + size] = fg
    flow = np.zeros((h, w, 2))
    flow[y0 : y0 + size, x0 : x0 + size] = (du, dv)
    covered = np.zeros((h, w), dtype=bool)
    covered[y0 + dv : y0 + dv + size, x0 + du : x0 + du + size] = True
    in_square = np.zeros((h, w), dtype=bool)
    in_square[y0 : y0 + size, x0 : x0 + size] = True
    occlusion = (covered & ~in_square).astype(np.float64)
    return image1, image2, flow, occlusion


def synth_pair(seed: int, motion: str = "translation", shape=(64, 64), *, displacement=None,
               matrix=None, square=None, channels: int = 3, shading_noise: float = 0.0) -> SyntheticPair:
    """Generate a textured pair whose second frame is the first moved by a known flow.

    ``displacement`` fixes the translation (or the square's motion for
    ``two_layer``); ``matrix`` is a 2x3 ``[A | t]`` affine map about the image
    centre. ``shading_noise`` adds independent Gaussian noise of that standard
    deviation to each frame.
    """
    if motion not in MOTIONS:
        raise ValueError(f"unknown motion {motion!r}; expected one of {MOTIONS}")
    rng = np.random.default_rng(seed)
    shape = tuple(int(s) for s in shape)
    if motion == "translation":
        image1, image2, flow, occ = _translation(rng, shape, displacement, channels)
    elif motion == "affine":
        image1, image2, flow, occ = _affine(rng, shape, matrix, channels)
    else:
        image1, image2, flow, occ = _two_layer(rng, shape, displacement, square, channels)
    if shading_noise > 0:
        image1 = image1 + rng.normal(0, shading_noise, image1.shape)
        image2 = image2 + rng.normal(0, shading_noise, image2.shape)
    return SyntheticPair(image1, image2, flow, occ, seed)
