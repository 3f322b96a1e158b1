"""Photometric and geometric augmentation applied consistently to a pair and its labels."""

from __future__ import annotations

import dataclasses

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .synth import SyntheticPair

OPS = ("channel_swap", "hue_shift", "flip_lr", "flip_ud")


def _hue_rotate(image: np.ndarray, angle: float) -> np.ndarray:
    rgb = np.clip((image + 1) / 2, 0, 1)
    hsv = rgb_to_hsv(rgb)
    hsv[..., 0] = (hsv[..., 0] + angle / (2 * np.pi)) % 1.0
    return hsv_to_rgb(hsv) * 2 - 1


def augment(pair, ops=(), seed: int = 0, hue_range: float = 0.5):
    """Apply ``ops`` in a fixed order.

    ``pair`` is a :class:`SyntheticPair` or a tuple ``(image1, image2, flow)``
    (flow may be None). Colour ops draw their permutation/angle from ``seed``;
    flips are deterministic and also mirror the flow with a sign change.
    """
    unknown = set(ops) - set(OPS)
    if unknown:
        raise ValueError(f"unknown augmentation ops {sorted(unknown)}")
    if isinstance(pair, SyntheticPair):
        image1, image2, flow, occ = pair.image1, pair.image2, pair.true_flow, pair.true_occlusion
    else:
        image1, image2, flow = pair
        occ = None
    image1 = np.array(image1, dtype=np.float64)
    image2 = np.array(image2, dtype=np.float64)
    flow = None if flow is None else np.array(flow, dtype=np.float64)
    occ = None if occ is None else np.array(occ, dtype=np.float64)
    rng = np.random.default_rng(seed)

    if ("channel_swap" in ops or "hue_shift" in ops) and image1.shape[-1] != 3:
        raise ValueError("colour augmentation needs 3-channel images")
    if "channel_swap" in ops:
        perm = rng.permutation(3)
        image1, image2 = image1[..., perm], image2[..., perm]
    if "hue_shift" in ops:
        angle = rng.uniform(-hue_range, hue_range)
        image1, image2 = _hue_rotate(image1, angle), _hue_rotate(image2, angle)
    if "flip_lr" in ops:
        image1, image2 = image1[:, ::-1], image2[:, ::-1]
        if flow is not None:
            flow = flow[:, ::-1] * np.array([-1.0, 1.0])
        if occ is not None:
            occ = occ[:, ::-1]
    if "flip_ud" in ops:
        image1, image2 = image1[::-1], image2[::-1]
        if flow is not None:
            flow = flow[::-1] * np.array([1.0, -1.0])
        if occ is not None:
            occ = occ[::-1]

    image1, image2 = np.ascontiguousarray(image1), np.ascontiguousarray(image2)
    flow = None if flow is None else np.ascontiguousarray(flow)
    if isinstance(pair, SyntheticPair):
        return dataclasses.replace(pair, image1=image1, image2=image2, true_flow=flow,
                                   true_occlusion=np.ascontiguousarray(occ))
    return image1, image2, flow
