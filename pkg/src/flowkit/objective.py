"""The composite bidirectional objective: photometric + smoothness + self-supervision."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import torch

from .image import as_grid, downsample_shape, resize_bilinear
from .occlusion import OcclusionConfig, combined_mask
from .photometric import LossKind, PhotometricConfig, photometric_loss
from .selfsup import selfsup_loss
from .smoothness import SmoothnessConfig, smoothness_loss


@dataclass(frozen=True)
class ObjectiveConfig:
    photometric: PhotometricConfig = field(default_factory=PhotometricConfig)
    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    smoothness: SmoothnessConfig = field(default_factory=SmoothnessConfig)
    w_photo: float | None = None
    w_smooth: float | None = None
    w_self: float = 0.3
    selfsup: bool = False
    selfsup_start: float = 0.5
    selfsup_ramp: float = 0.1
    selfsup_crop: int = 64

    def __post_init__(self):
        for name in ("w_photo", "w_smooth"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.w_self < 0:
            raise ValueError("w_self must be nonnegative")
        if self.selfsup_crop < 0:
            raise ValueError("selfsup_crop must be nonnegative")

    @property
    def photo_weight(self) -> float:
        if self.w_photo is not None:
            return self.w_photo
        return 1.0 if self.photometric.kind is LossKind.CENSUS else 2.0

    @property
    def smooth_weight(self) -> float:
        if self.w_smooth is not None:
            return self.w_smooth
        return self.smoothness.resolved_weight

    def self_weight(self, progress: float) -> float:
        """Zero until ``selfsup_start``, linear ramp over ``selfsup_ramp``, then ``w_self``."""
        if progress < self.selfsup_start:
            return 0.0
        if self.selfsup_ramp <= 0 or progress >= self.selfsup_start + self.selfsup_ramp:
            return self.w_self
        return self.w_self * (progress - self.selfsup_start) / self.selfsup_ramp


class SelfSupTerms(NamedTuple):
    """Student flows plus frozen teacher labels and label masks, both directions."""

    student_forward: torch.Tensor
    student_backward: torch.Tensor
    labels_forward: torch.Tensor
    mask_forward: torch.Tensor
    labels_backward: torch.Tensor
    mask_backward: torch.Tensor


class LossBreakdown(NamedTuple):
    photo: torch.Tensor
    smooth: torch.Tensor
    self: torch.Tensor


def flow_level(image_shape: tuple[int, int], flow_shape: tuple[int, int]) -> int:
    """Number of 2x downsamplings taking ``image_shape`` to ``flow_shape``."""
    h, w = image_shape
    for level in range(32):
        if (h, w) == tuple(flow_shape):
            return level
        if h == 1 and w == 1:
            break
        h, w = downsample_shape(h, w)
    raise ValueError(f"flow shape {tuple(flow_shape)} is not a pyramid level of {tuple(image_shape)}")


def upsample_flow(flow: torch.Tensor, shape: tuple[int, int]) -> torch.Tensor:
    if tuple(flow.shape[:2]) == tuple(shape):
        return flow
    return resize_bilinear(flow, shape[0], shape[1], rescale_flow_values=True)


def occlusion_masks(forward, backward, config: ObjectiveConfig, progress: float, shape=None):
    """Gradient-stopped masks for both directions at the photometric resolution."""
    forward, backward = as_grid(forward), as_grid(backward)
    if shape is not None:
        forward = upsample_flow(forward.detach(), shape)
        backward = upsample_flow(backward.detach(), shape)
    return (
        combined_mask(forward, backward, config.occlusion, progress),
        combined_mask(backward, forward, config.occlusion, progress),
    )


def total_loss(
    image1,
    image2,
    forward,
    backward,
    config: ObjectiveConfig = ObjectiveConfig(),
    progress: float = 1.0,
    *,
    selfsup: SelfSupTerms | None = None,
    masks: tuple | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Weighted sum of bidirectional photometric, smoothness and self-supervision losses.

    The flows may live at a coarser pyramid level than the images; they are
    then upsampled for the photometric term while smoothness is applied at
    their own resolution. ``masks`` overrides the occlusion estimate (used to
    hold it fixed during finite-difference checks).
    """
    if not 0 <= progress <= 1:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    image1, image2 = as_grid(image1), as_grid(image2)
    forward, backward = as_grid(forward), as_grid(backward)
    if image1.shape != image2.shape:
        raise ValueError(f"image shapes differ: {tuple(image1.shape)} vs {tuple(image2.shape)}")
    if forward.shape != backward.shape:
        raise ValueError(f"flow shapes differ: {tuple(forward.shape)} vs {tuple(backward.shape)}")
    shape = tuple(image1.shape[:2])
    level = flow_level(shape, tuple(forward.shape[:2]))
    fwd_up = upsample_flow(forward, shape)
    bwd_up = upsample_flow(backward, shape)
    if masks is None:
        masks = occlusion_masks(fwd_up, bwd_up, config, progress)
    mask_fwd, mask_bwd = masks

    photo = photometric_loss(image1, image2, fwd_up, mask_fwd, config.photometric) + photometric_loss(
        image2, image1, bwd_up, mask_bwd, config.photometric
    )
    smooth_cfg = replace(config.smoothness, level=level)
    smooth = smoothness_loss(forward, image1, smooth_cfg) + smoothness_loss(backward, image2, smooth_cfg)
    if selfsup is not None:
        self_term = selfsup_loss(
            selfsup.student_forward, selfsup.student_backward,
            selfsup.labels_forward, selfsup.mask_forward, config,
        ) + selfsup_loss(
            selfsup.student_backward, selfsup.student_forward,
            selfsup.labels_backward, selfsup.mask_backward, config,
        )
    else:
        self_term = torch.zeros((), dtype=photo.dtype)
    total = (
        config.photo_weight * photo
        + config.smooth_weight * smooth
        + config.self_weight(progress) * self_term
    )
    return total, LossBreakdown(photo, smooth, self_term)
