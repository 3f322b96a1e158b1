"""Edge-aware k-th order flow smoothness evaluated at the flow's own resolution."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .image import as_grid, downsample2x, spatial_gradients


@dataclass(frozen=True)
class SmoothnessConfig:
    order: int = 1
    edge_weight: float = 150.0
    level: int = 2
    weight: float | None = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"smoothness order must be 1 or 2, got {self.order}")
        if self.edge_weight < 0:
            raise ValueError("edge_weight must be nonnegative")
        if self.level < 0:
            raise ValueError("level must be nonnegative")

    @property
    def resolved_weight(self) -> float:
        if self.weight is not None:
            return self.weight
        return 2.0 if self.order == 1 else 4.0


def edge_weights(image, edge_weight: float) -> tuple[torch.Tensor, torch.Tensor]:
    """``exp(-(lambda / C) * sum_c |dI_c|)`` along x and y, on forward-difference grids.

    Returns ``wx`` of shape (H, W-1) and ``wy`` of shape (H-1, W).
    """
    image = as_grid(image)
    channels = image.shape[-1]
    dx, dy = spatial_gradients(image)
    scale = edge_weight / channels
    wx = torch.exp(-scale * dx.abs().sum(-1))
    wy = torch.exp(-scale * dy.abs().sum(-1))
    return wx, wy


def image_at_level(image, level: int) -> torch.Tensor:
    image = as_grid(image)
    for _ in range(level):
        image = downsample2x(image)
    return image


def smoothness_loss(flow_at_level, image_full, config: SmoothnessConfig = SmoothnessConfig()):
    """Edge-aware smoothness of a flow living at pyramid level ``config.level``.

    The image is box-downsampled to the flow's resolution rather than the flow
    being upsampled. The x and y terms are each averaged over the positions
    where the difference stencil fits and over both flow channels, then summed.
    """
    flow = as_grid(flow_at_level)
    image = image_at_level(image_full, config.level)
    if image.shape[:2] != flow.shape[:2]:
        raise ValueError(
            f"flow {tuple(flow.shape[:2])} does not match level-{config.level} "
            f"image resolution {tuple(image.shape[:2])}"
        )
    wx, wy = edge_weights(image, config.edge_weight)
    fdx, fdy = spatial_gradients(flow)
    if config.order == 2:
        if min(flow.shape[:2]) < 3:
            raise ValueError("second order smoothness needs at least 3x3 flow")
        fdx = fdx[:, 1:] - fdx[:, :-1]
        fdy = fdy[1:] - fdy[:-1]
        # centre pixel's forward difference
        wx = wx[:, 1:]
        wy = wy[1:]
    term_x = (wx.unsqueeze(-1) * fdx.abs()).mean()
    term_y = (wy.unsqueeze(-1) * fdy.abs()).mean()
    return term_x + term_y
