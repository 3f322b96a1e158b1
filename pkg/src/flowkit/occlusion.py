"""Occlusion estimation: forward-backward consistency, range maps, out-of-frame masking.

All masks use 1 = usable (visible and in frame), 0 = excluded, and are
returned detached so no loss gradient reaches the occlusion estimate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch

from .image import DTYPE, as_grid, pixel_grid, splat, warp


class OcclusionMethod(str, enum.Enum):
    NONE = "none"
    RANGE_MAP = "range"
    FORWARD_BACKWARD = "fb"


@dataclass(frozen=True)
class OcclusionConfig:
    method: OcclusionMethod = OcclusionMethod.RANGE_MAP
    alpha1: float = 0.01
    alpha2: float = 0.5
    range_threshold: float = 1.0
    activation_fraction: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "method", OcclusionMethod(self.method))
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha1 and alpha2 must be nonnegative")
        if self.range_threshold <= 0:
            raise ValueError("range_threshold must be positive")
        if not 0 <= self.activation_fraction <= 1:
            raise ValueError("activation_fraction must lie in [0, 1]")


def _same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"flow shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


@torch.no_grad()
def fb_consistency_mask(forward, backward, config: OcclusionConfig = OcclusionConfig()):
    """1 where the forward flow and the back-projected backward flow cancel.

    Test: ``|f + b_w|^2 < alpha1 * (|f|^2 + |b_w|^2) + alpha2`` with
    ``b_w = warp(backward, forward)``.
    """
    forward, backward = as_grid(forward).detach(), as_grid(backward).detach()
    _same_shape(forward, backward)
    back_warped = warp(backward, forward)
    mismatch = ((forward + back_warped) ** 2).sum(-1)
    bound = config.alpha1 * ((forward**2).sum(-1) + (back_warped**2).sum(-1)) + config.alpha2
    return (mismatch < bound).to(DTYPE)


@torch.no_grad()
def range_map(backward) -> torch.Tensor:
    """Bilinear mass landing on each pixel when every backward vector carries weight 1."""
    backward = as_grid(backward).detach()
    ones = torch.ones(backward.shape[:2] + (1,), dtype=DTYPE)
    return splat(ones, backward)[..., 0]


@torch.no_grad()
def range_occlusion_mask(backward, config: OcclusionConfig = OcclusionConfig()):
    return (range_map(backward) >= config.range_threshold).to(DTYPE)


@torch.no_grad()
def invalid_mask(flow) -> torch.Tensor:
    """1 where ``(x + u, y + v)`` stays inside ``[0, W-1] x [0, H-1]``."""
    flow = as_grid(flow).detach()
    h, w, _ = flow.shape
    xs, ys = pixel_grid(h, w)
    px = xs + flow[..., 0]
    py = ys + flow[..., 1]
    inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
    return inside.to(DTYPE)


@torch.no_grad()
def occlusion_mask(forward, backward, config: OcclusionConfig, progress: float = 1.0):
    """Occlusion estimate for the pixels of the frame that ``forward`` starts from."""
    method = config.method
    if method is OcclusionMethod.NONE:
        return torch.ones(as_grid(forward).shape[:2], dtype=DTYPE)
    if method is OcclusionMethod.RANGE_MAP:
        return range_occlusion_mask(backward, config)
    if progress < config.activation_fraction:
        return torch.ones(as_grid(forward).shape[:2], dtype=DTYPE)
    return fb_consistency_mask(forward, backward, config)


@torch.no_grad()
def combined_mask(forward, backward, config: OcclusionConfig = OcclusionConfig(), progress: float = 1.0):
    """Out-of-frame mask times the configured occlusion mask, as a constant."""
    if not 0 <= progress <= 1:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    forward, backward = as_grid(forward).detach(), as_grid(backward).detach()
    _same_shape(forward, backward)
    return invalid_mask(forward) * occlusion_mask(forward, backward, config, progress)
