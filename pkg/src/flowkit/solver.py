"""Coarse-to-fine direct minimization of the flow objective for a single image pair.

The flow fields themselves are the optimization variables. Both directions are
estimated jointly. "Training progress" is the fraction of solver iterations
done, which drives the delayed forward-backward masking and the
self-supervision weight ramp.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage

from .image import DTYPE, as_grid, build_pyramid, resize_bilinear
from .matching import aggregate_cost, argmax_flow, cost_volume, extract_features, normalize_features
from .objective import (
    ObjectiveConfig,
    SelfSupTerms,
    occlusion_masks,
    total_loss,
    upsample_flow,
)
from .selfsup import crop_grid, selfsup_labels

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    levels: int = 3
    iterations_per_level: int = 60
    step_size: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decay_fraction: float = 0.2
    final_step_ratio: float = 1e-4
    radius: int = 4
    median_window: int = 5
    match_window: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0 <= self.decay_fraction <= 1:
            raise ValueError("decay_fraction must lie in [0, 1]")

    def step_at(self, iteration: int) -> float:
        """Constant step, then exponential decay over the last ``decay_fraction`` of a level."""
        n = self.iterations_per_level
        decay_steps = int(round(self.decay_fraction * n))
        start = n - decay_steps
        if decay_steps == 0 or iteration < start:
            return self.step_size
        t = (iteration - start + 1) / decay_steps
        return self.step_size * self.final_step_ratio**t


@dataclass
class FlowEstimate:
    forward: np.ndarray
    backward: np.ndarray
    mask_forward: np.ndarray
    mask_backward: np.ndarray
    final_loss: float
    per_term_losses: tuple[float, float, float]
    level_history: list[dict] = field(default_factory=list)


class NonFiniteLossError(FloatingPointError):
    pass


def _initial_flows(image1: torch.Tensor, image2: torch.Tensor, radius: int, window: int):
    f1 = normalize_features(extract_features(image1))
    f2 = normalize_features(extract_features(image2))
    forward = argmax_flow(aggregate_cost(cost_volume(f1, f2, radius), window))
    backward = argmax_flow(aggregate_cost(cost_volume(f2, f1, radius), window))
    return torch.as_tensor(forward, dtype=DTYPE), torch.as_tensor(backward, dtype=DTYPE)


def median_filter_flow(flow: torch.Tensor, window: int) -> torch.Tensor:
    """Per-channel median filter with edge replication; removes isolated outlier vectors."""
    if window <= 1:
        return flow
    arr = ndimage.median_filter(flow.detach().numpy(), size=(window, window, 1), mode="nearest")
    return torch.as_tensor(arr, dtype=DTYPE)


def _check_finite(total, breakdown, where: str) -> None:
    if torch.isfinite(total):
        return
    for name, value in zip(breakdown._fields, breakdown):
        if not torch.isfinite(value):
            raise NonFiniteLossError(f"non-finite {name} term ({float(value.detach())}) at {where}")
    raise NonFiniteLossError(f"non-finite total loss at {where}")


class _Student:
    """Flows estimated on the crop-resized pair, supervised by the live solution."""

    def __init__(self, image1, image2, flow_shape, objective: ObjectiveConfig):
        h, w, _ = image1.shape
        fh, fw = flow_shape
        crop = objective.selfsup_crop
        self.flow_crop = int(round(crop * fh / h))
        if h - 2 * crop < 2 or w - 2 * crop < 2 or fh - 2 * self.flow_crop < 2 or fw - 2 * self.flow_crop < 2:
            raise ValueError(f"selfsup crop {crop} is too large for a {h}x{w} image")
        self.flow_shape = (fh, fw)
        self.image1 = resize_bilinear(crop_grid(image1, crop), h, w)
        self.image2 = resize_bilinear(crop_grid(image2, crop), h, w)
        self.forward = None
        self.backward = None
        self.optimizer = None

    def terms(self, teacher_forward, teacher_backward, objective: ObjectiveConfig) -> SelfSupTerms:
        labels_f, mask_f = selfsup_labels(
            teacher_forward, teacher_backward, self.flow_crop, self.flow_shape, objective.occlusion
        )
        labels_b, mask_b = selfsup_labels(
            teacher_backward, teacher_forward, self.flow_crop, self.flow_shape, objective.occlusion
        )
        if self.forward is None:
            self.forward = labels_f.clone().requires_grad_(True)
            self.backward = labels_b.clone().requires_grad_(True)
        return SelfSupTerms(self.forward, self.backward, labels_f, mask_f, labels_b, mask_b)


def estimate_flow(
    image1,
    image2,
    objective: ObjectiveConfig = ObjectiveConfig(),
    solver: SolverConfig = SolverConfig(),
) -> FlowEstimate:
    """Estimate forward and backward flow between two images in [-1, 1].

    Returns full-resolution flows, their occlusion masks and the loss terms of
    the best iterate at the finest level.
    """
    torch.manual_seed(solver.seed)
    image1, image2 = as_grid(image1).detach(), as_grid(image2).detach()
    if image1.shape != image2.shape:
        raise ValueError(f"image shapes differ: {tuple(image1.shape)} vs {tuple(image2.shape)}")
    h, w, _ = image1.shape
    if min(h, w) < 2**solver.levels:
        raise ValueError(f"a {h}x{w} image is too small for {solver.levels} pyramid levels")

    pyr1 = build_pyramid(image1, solver.levels)
    pyr2 = build_pyramid(image2, solver.levels)
    coarsest = solver.levels - 1
    native = min(objective.smoothness.level, coarsest)
    forward, backward = _initial_flows(pyr1[coarsest], pyr2[coarsest], solver.radius, solver.match_window)

    total_iters = solver.levels * solver.iterations_per_level
    history: list[dict] = []
    student = None
    breakdown = None
    final_total = math.nan

    for rank, level in enumerate(range(coarsest, -1, -1)):
        img1, img2 = pyr1[level], pyr2[level]
        var_level = max(level, native)
        var_shape = tuple(pyr1[var_level].shape[:2])
        forward = upsample_flow(median_filter_flow(forward, solver.median_window), var_shape)
        backward = upsample_flow(median_filter_flow(backward, solver.median_window), var_shape)
        forward = forward.clone().requires_grad_(True)
        backward = backward.clone().requires_grad_(True)
        optimizer = torch.optim.Adam(
            [forward, backward],
            lr=solver.step_size,
            betas=(solver.beta1, solver.beta2),
            eps=solver.adam_eps,
        )
        use_student = objective.selfsup and level == 0
        if use_student:
            student = _Student(img1, img2, var_shape, objective)

        def evaluate(fwd, bwd, progress):
            total, parts = total_loss(img1, img2, fwd, bwd, objective, progress)
            if student is not None and use_student and objective.self_weight(progress) > 0:
                terms = student.terms(fwd, bwd, objective)
                student_total, student_parts = total_loss(
                    student.image1, student.image2, terms.student_forward,
                    terms.student_backward, objective, progress, selfsup=terms,
                )
                parts = parts._replace(self=student_parts.self)
                return total, parts, student_total
            return total, parts, None

        start_iter = rank * solver.iterations_per_level
        end_progress = min(1.0, (start_iter + solver.iterations_per_level) / total_iters)
        init = (forward.detach().clone(), backward.detach().clone())
        best = (math.inf, init)
        where = f"level {level}"

        for it in range(solver.iterations_per_level):
            progress = (start_iter + it) / total_iters
            lr = solver.step_at(it)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            total, parts, student_total = evaluate(forward, backward, progress)
            _check_finite(total, parts, f"{where}, iteration {it}")
            value = float(total.detach())
            if value < best[0]:
                best = (value, (forward.detach().clone(), backward.detach().clone()))
            objective_value = total
            if student_total is not None:
                _check_finite(student_total, parts, f"{where}, iteration {it} (student)")
                if student.optimizer is None:
                    student.optimizer = torch.optim.Adam(
                        [student.forward, student.backward],
                        lr=solver.step_size,
                        betas=(solver.beta1, solver.beta2),
                        eps=solver.adam_eps,
                    )
                for group in student.optimizer.param_groups:
                    group["lr"] = lr
                student.optimizer.zero_grad()
                objective_value = total + student_total
            objective_value.backward()
            optimizer.step()
            if student_total is not None:
                student.optimizer.step()

        # pick the best of start / best-tracked / last under the level-end objective
        candidates = [init, best[1], (forward.detach().clone(), backward.detach().clone())]
        scored = []
        with torch.no_grad():
            for fwd, bwd in candidates:
                total, parts, _ = evaluate(fwd, bwd, end_progress)
                _check_finite(total, parts, f"{where}, final selection")
                scored.append((float(total), parts))
        choice = min(range(len(candidates)), key=lambda i: scored[i][0])
        forward, backward = candidates[choice]
        final_total, breakdown = scored[choice]
        history.append(
            {"level": level, "initial_loss": scored[0][0], "final_loss": final_total, "progress": end_progress}
        )
        logger.debug("level %d: loss %.6g -> %.6g", level, scored[0][0], final_total)

    full_f = upsample_flow(forward, (h, w))
    full_b = upsample_flow(backward, (h, w))
    mask_f, mask_b = occlusion_masks(full_f, full_b, objective, 1.0)
    photo, smooth, self_term = (float(x) for x in breakdown)
    final_loss = (
        objective.photo_weight * photo
        + objective.smooth_weight * smooth
        + objective.self_weight(1.0) * self_term
    )
    return FlowEstimate(
        forward=full_f.numpy().copy(),
        backward=full_b.numpy().copy(),
        mask_forward=mask_f.numpy().copy(),
        mask_backward=mask_b.numpy().copy(),
        final_loss=final_loss,
        per_term_losses=(photo, smooth, self_term),
        level_history=history,
    )
