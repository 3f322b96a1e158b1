"""Crop-and-resize self-supervision: teacher label generation and the student loss."""

from __future__ import annotations

import torch

from .image import as_grid, as_mask, resize_bilinear
from .occlusion import OcclusionConfig, fb_consistency_mask
from .photometric import charbonnier, masked_mean


def crop_grid(grid: torch.Tensor, crop: int) -> torch.Tensor:
    if crop == 0:
        return grid
    return grid[crop:-crop, crop:-crop]


def selfsup_labels(teacher_forward, teacher_backward, crop: int, target_shape, occlusion=None):
    """Cut ``crop`` pixels off every edge of the teacher flows and resize to ``target_shape``.

    Flow values are rescaled with the resize. The label mask marks pixels where
    the cropped, rescaled teacher pair passes the forward-backward check.
    Both outputs are detached from the teacher.
    """
    forward = as_grid(teacher_forward).detach()
    backward = as_grid(teacher_backward).detach()
    if forward.shape != backward.shape:
        raise ValueError(f"teacher shapes differ: {tuple(forward.shape)} vs {tuple(backward.shape)}")
    h, w, _ = forward.shape
    if crop < 0 or h - 2 * crop < 2 or w - 2 * crop < 2:
        raise ValueError(f"crop {crop} leaves less than 2x2 of a {h}x{w} flow")
    th, tw = target_shape
    labels = resize_bilinear(crop_grid(forward, crop), th, tw, rescale_flow_values=True)
    labels_back = resize_bilinear(crop_grid(backward, crop), th, tw, rescale_flow_values=True)
    mask = fb_consistency_mask(labels, labels_back, occlusion or OcclusionConfig())
    return labels, mask


def selfsup_loss(student_forward, student_backward, labels, label_mask, objective, student_fb_mask=None):
    """Charbonnier distance to the labels on pixels the teacher trusts and the student does not.

    ``student_fb_mask`` may be passed to pin the student's consistency mask;
    otherwise it is recomputed (without gradient) from the student flows.
    """
    student_forward = as_grid(student_forward)
    labels = as_grid(labels).detach()
    if student_forward.shape != labels.shape:
        raise ValueError(f"student {tuple(student_forward.shape)} vs labels {tuple(labels.shape)}")
    if student_fb_mask is None:
        student_fb_mask = fb_consistency_mask(student_forward, student_backward, objective.occlusion)
    active = as_mask(label_mask).detach() * (1 - as_mask(student_fb_mask).detach())
    photo = objective.photometric
    penalty = charbonnier(student_forward - labels, photo.charbonnier_alpha, photo.charbonnier_eps)
    return masked_mean(penalty, active)
