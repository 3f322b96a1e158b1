"""Occlusion-masked photometric losses: modified L1, generalized Charbonnier, SSIM, Census."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch

from .image import DTYPE, as_grid, as_mask, rgb_to_gray, warp


class LossKind(str, enum.Enum):
    L1 = "l1"
    CHARBONNIER = "charbonnier"
    SSIM = "ssim"
    CENSUS = "census"


@dataclass(frozen=True)
class PhotometricConfig:
    kind: LossKind = LossKind.CENSUS
    charbonnier_alpha: float = 0.5
    charbonnier_eps: float = 0.001
    l1_eps: float = 1e-6
    census_window: int = 7
    ssim_window: int = 3
    ssim_c1: float = 0.01**2
    ssim_c2: float = 0.03**2

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        for name in ("census_window", "ssim_window"):
            size = getattr(self, name)
            if size < 3 or size % 2 == 0:
                raise ValueError(f"{name} must be odd and >= 3, got {size}")
        if not 0 < self.charbonnier_alpha <= 1:
            raise ValueError("charbonnier_alpha must lie in (0, 1]")
        if self.charbonnier_eps <= 0 or self.l1_eps <= 0:
            raise ValueError("epsilon offsets must be positive")

    @property
    def floor(self) -> float:
        """Loss value when the warped image matches exactly."""
        if self.kind is LossKind.L1:
            return self.l1_eps
        if self.kind is LossKind.SSIM:
            return 0.0
        return self.charbonnier_eps ** (2 * self.charbonnier_alpha)


def masked_mean(values, mask) -> torch.Tensor:
    """Occlusion-masked average; the mask is treated as a constant.

    ``values`` may carry trailing channels, in which case the mask is
    broadcast over them.
    """
    values = values if isinstance(values, torch.Tensor) else torch.as_tensor(values, dtype=DTYPE)
    mask = as_mask(mask).detach()
    if values.shape[:2] != mask.shape:
        raise ValueError(f"values {tuple(values.shape)} and mask {tuple(mask.shape)} disagree")
    if values.ndim == 3:
        mask = mask.unsqueeze(-1).expand_as(values)
    return (values * mask).sum() / (mask.sum() + 1e-16)


def charbonnier(diff, alpha: float = 0.5, eps: float = 0.001) -> torch.Tensor:
    return (diff**2 + eps**2) ** alpha


def robust_penalty(diff, config: PhotometricConfig) -> torch.Tensor:
    """Elementwise penalty for the two pixelwise losses."""
    if config.kind is LossKind.CHARBONNIER:
        return charbonnier(diff, config.charbonnier_alpha, config.charbonnier_eps)
    if config.kind is LossKind.L1:
        return (diff + config.l1_eps).abs()
    raise ValueError(f"{config.kind.value} is a structural loss, not an elementwise penalty")


def erode_border(mask: torch.Tensor, radius: int) -> torch.Tensor:
    """Zero the outer ``radius`` rows and columns of a mask."""
    out = torch.zeros_like(mask)
    h, w = mask.shape
    if h > 2 * radius and w > 2 * radius:
        out[radius : h - radius, radius : w - radius] = mask[radius : h - radius, radius : w - radius]
    return out


def census_transform(image, window: int = 7) -> torch.Tensor:
    """Soft census descriptor: (H, W, window**2) soft signs of neighbour minus centre.

    Neighbours outside the frame read as 0; the loss masks those pixels out.
    """
    gray = rgb_to_gray(image)[..., 0]
    h, w = gray.shape
    r = window // 2
    padded = torch.nn.functional.pad(gray, (r, r, r, r))
    neighbours = torch.stack(
        [padded[dy : dy + h, dx : dx + w] for dy in range(window) for dx in range(window)],
        dim=-1,
    )
    diff = neighbours - gray.unsqueeze(-1)
    return diff / torch.sqrt(0.0081 + diff**2)


def soft_hamming(a: torch.Tensor, b: torch.Tensor, thresh: float = 0.1) -> torch.Tensor:
    sq = (a - b) ** 2
    return (sq / (thresh + sq)).sum(-1)


def _check_pair(image1: torch.Tensor, image2: torch.Tensor, window: int) -> None:
    if image1.shape != image2.shape:
        raise ValueError(f"image shapes differ: {tuple(image1.shape)} vs {tuple(image2.shape)}")
    h, w, _ = image1.shape
    if window > h or window > w:
        raise ValueError(f"window {window} does not fit a {h}x{w} image")


def census_loss(image1, warped2, mask, config: PhotometricConfig = PhotometricConfig()):
    image1, warped2 = as_grid(image1), as_grid(warped2)
    _check_pair(image1, warped2, config.census_window)
    dist = soft_hamming(
        census_transform(image1, config.census_window),
        census_transform(warped2, config.census_window),
    )
    valid = erode_border(as_mask(mask), config.census_window // 2)
    return masked_mean(charbonnier(dist, config.charbonnier_alpha, config.charbonnier_eps), valid)


def _box_mean(x: torch.Tensor, window: int) -> torch.Tensor:
    """Mean over every fully-contained window; output (H-window+1, W-window+1, C)."""
    chw = x.permute(2, 0, 1).unsqueeze(0)
    pooled = torch.nn.functional.avg_pool2d(chw, window, stride=1)
    return pooled[0].permute(1, 2, 0)


def ssim_map(image1, image2, config: PhotometricConfig = PhotometricConfig()) -> torch.Tensor:
    """Per-pixel SSIM on intensities mapped to [0, 1], valid window centres only."""
    x = (as_grid(image1) + 1) / 2
    y = (as_grid(image2) + 1) / 2
    k = config.ssim_window
    mu_x = _box_mean(x, k)
    mu_y = _box_mean(y, k)
    sigma_x = _box_mean(x * x, k) - mu_x**2
    sigma_y = _box_mean(y * y, k) - mu_y**2
    sigma_xy = _box_mean(x * y, k) - mu_x * mu_y
    c1, c2 = config.ssim_c1, config.ssim_c2
    num = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sigma_x + sigma_y + c2)
    return num / den


def ssim_loss(image1, warped2, mask, config: PhotometricConfig = PhotometricConfig()):
    image1, warped2 = as_grid(image1), as_grid(warped2)
    _check_pair(image1, warped2, config.ssim_window)
    dissim = ((1 - ssim_map(image1, warped2, config)) / 2).clamp(0, 1)
    r = config.ssim_window // 2
    h, w, _ = image1.shape
    centre_mask = as_mask(mask)[r : h - r, r : w - r]
    return masked_mean(dissim, centre_mask)


def structural_or_pixel_loss(image1, warped2, mask, config: PhotometricConfig) -> torch.Tensor:
    """Dispatch on the loss kind for an already-warped second image."""
    if config.kind is LossKind.CENSUS:
        return census_loss(image1, warped2, mask, config)
    if config.kind is LossKind.SSIM:
        return ssim_loss(image1, warped2, mask, config)
    image1, warped2 = as_grid(image1), as_grid(warped2)
    if image1.shape != warped2.shape:
        raise ValueError(f"image shapes differ: {tuple(image1.shape)} vs {tuple(warped2.shape)}")
    return masked_mean(robust_penalty(image1 - warped2, config), mask)


def photometric_loss(image1, image2, flow, mask, config: PhotometricConfig = PhotometricConfig()):
    """Warp ``image2`` back by ``flow`` and compare it with ``image1``.

    Differentiable with respect to ``flow`` (and the images); the mask is a
    constant.
    """
    warped = warp(image2, flow)
    return structural_or_pixel_loss(image1, warped, mask, config)
