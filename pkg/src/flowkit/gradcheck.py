"""Central finite-difference checks of the autograd gradients of every loss.

Inputs are built to stay clear of the non-smooth points of each loss for the
whole finite-difference stencil: sample coordinates keep >= 0.1 px from the
bilinear kernel breakpoints, L1 residuals stay away from zero, and flow
differences entering ``|.|`` in the smoothness term stay away from zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from .image import DTYPE, warp
from .objective import ObjectiveConfig, total_loss
from .occlusion import OcclusionConfig, combined_mask
from .photometric import LossKind, PhotometricConfig, photometric_loss
from .selfsup import selfsup_loss
from .smoothness import SmoothnessConfig, smoothness_loss
from .synth import band_limited_texture

STEP = 1e-3
SIZE = 16
MODULES = ("photometric", "smoothness", "selfsup", "occlusion", "solver")


def numerical_gradient(fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor,
                       step: float = STEP) -> np.ndarray:
    base = x.detach().clone()
    flat = base.view(-1)
    grad = np.empty(flat.numel())
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + step
            up = float(fn(base))
            flat[i] = orig - step
            down = float(fn(base))
            flat[i] = orig
            grad[i] = (up - down) / (2 * step)
    return grad.reshape(tuple(x.shape))


def analytic_gradient(fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor) -> np.ndarray:
    var = x.detach().clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(var), var)
    return grad.numpy()


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max |a - n| / max |n|``.

    Normalizing per entry instead would blow up on entries whose true
    gradient is ~0, where the O(step^2) truncation error dominates.
    """
    scale = float(np.abs(numeric).max())
    diff = float(np.abs(analytic - numeric).max())
    return diff / scale if scale > 0 else diff


def offgrid_flow(rng: np.random.Generator, size: int = SIZE, reach: int = 2) -> np.ndarray:
    """Random flow whose fractional part lies in [0.1, 0.9]."""
    whole = rng.integers(-reach, reach, size=(size, size, 2))
    return whole + rng.uniform(0.1, 0.9, size=(size, size, 2))


def kink_free_flow(rng: np.random.Generator, size: int = SIZE, integer_jumps: bool = True) -> np.ndarray:
    """Flow with fractional part in [0.1, 0.9] whose first and second differences avoid 0.

    A checkerboard of fractional offsets (0.25 / 0.75) keeps neighbouring
    differences near +-0.5 and second differences near +-1. An affine ramp
    plus integer jumps (first order only) make the field otherwise random.
    """
    ys, xs = np.mgrid[0:size, 0:size]
    checker = np.where((xs + ys) % 2 == 0, 0.25, 0.75)[..., None]
    flow = checker + rng.uniform(-0.05, 0.05, size=(size, size, 2))
    if integer_jumps:
        flow = flow + rng.integers(-1, 2, size=(size, size, 2))
    return flow


def smoothness_flow(rng: np.random.Generator, size: int = SIZE) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    checker = np.where((xs + ys) % 2 == 0, -0.5, 0.5)[..., None]
    slope = rng.uniform(-0.15, 0.15, size=(2, 2))
    affine = xs[..., None] * slope[0] + ys[..., None] * slope[1] + rng.uniform(-3, 3, size=2)
    return checker + affine + rng.uniform(-0.05, 0.05, size=(size, size, 2))


def _smooth_image(rng: np.random.Generator, size: int = SIZE, channels: int = 3) -> np.ndarray:
    return 0.8 * band_limited_texture(rng, size, size, channels, sigma=1.2)


def _random_mask(rng: np.random.Generator, size: int = SIZE, keep: float = 0.8) -> torch.Tensor:
    return torch.as_tensor((rng.random((size, size)) < keep).astype(np.float64))


@dataclass
class Case:
    name: str
    fn: Callable[[torch.Tensor], torch.Tensor]
    x: torch.Tensor


def photometric_case(kind: str, seed: int) -> Case:
    rng = np.random.default_rng(seed)
    image2 = torch.as_tensor(_smooth_image(rng))
    flow = torch.as_tensor(offgrid_flow(rng))
    residual = rng.uniform(0.05, 0.3, size=image2.shape) * rng.choice([-1.0, 1.0], size=image2.shape)
    with torch.no_grad():
        image1 = warp(image2, flow) + torch.as_tensor(residual)
    mask = _random_mask(rng)
    config = PhotometricConfig(kind=kind)
    return Case(f"photometric/{kind}", lambda f: photometric_loss(image1, image2, f, mask, config), flow)


def smoothness_case(order: int, seed: int) -> Case:
    rng = np.random.default_rng(seed)
    image = torch.as_tensor(_smooth_image(rng))
    flow = torch.as_tensor(smoothness_flow(rng))
    # lambda small enough that edge weights are not all ~0 on this texture
    config = SmoothnessConfig(order=order, edge_weight=5.0, level=0)
    return Case(f"smoothness/k={order}", lambda f: smoothness_loss(f, image, config), flow)


def selfsup_case(seed: int) -> Case:
    rng = np.random.default_rng(seed)
    student_b = torch.as_tensor(rng.uniform(-2, 2, size=(SIZE, SIZE, 2)))
    student_f = torch.as_tensor(rng.uniform(-2, 2, size=(SIZE, SIZE, 2)))
    # residuals stay >= 0.05 from 0, where the Charbonnier curvature is ~1/eps
    gap = rng.uniform(0.05, 1.0, size=(SIZE, SIZE, 2)) * rng.choice([-1.0, 1.0], size=(SIZE, SIZE, 2))
    labels = student_f + torch.as_tensor(gap)
    label_mask = _random_mask(rng, keep=0.7)
    student_fb = _random_mask(rng, keep=0.3)
    objective = ObjectiveConfig()
    return Case(
        "selfsup",
        lambda f: selfsup_loss(f, student_b, labels, label_mask, objective, student_fb_mask=student_fb),
        student_f,
    )


def solver_case(seed: int) -> Case:
    """Total objective w.r.t. the stacked (forward, backward) flows, masks held fixed."""
    rng = np.random.default_rng(seed)
    image1 = torch.as_tensor(_smooth_image(rng))
    image2 = torch.as_tensor(_smooth_image(rng))
    flows = torch.as_tensor(np.stack([kink_free_flow(rng), kink_free_flow(rng)]))
    objective = ObjectiveConfig(smoothness=SmoothnessConfig(edge_weight=5.0, level=0))
    masks = (_random_mask(rng), _random_mask(rng))

    def fn(stacked):
        total, _ = total_loss(image1, image2, stacked[0], stacked[1], objective, 1.0, masks=masks)
        return total

    return Case("solver/total_loss", fn, flows)


def cases(module: str, seed: int) -> list[Case]:
    if module == "photometric":
        return [photometric_case(kind.value, seed) for kind in LossKind]
    if module == "smoothness":
        return [smoothness_case(1, seed), smoothness_case(2, seed)]
    if module == "selfsup":
        return [selfsup_case(seed)]
    if module == "solver":
        return [solver_case(seed)]
    raise ValueError(f"no finite-difference cases for module {module!r}")


def mask_gradient_stop_error(seed: int) -> float:
    """Max |grad with recomputed mask - grad with a frozen copy|; must be exactly 0."""
    rng = np.random.default_rng(seed)
    image1 = torch.as_tensor(_smooth_image(rng))
    image2 = torch.as_tensor(_smooth_image(rng))
    backward = torch.as_tensor(offgrid_flow(rng, reach=1))
    worst = 0.0
    for method in ("range", "fb"):
        config = OcclusionConfig(method=method)
        flow = torch.as_tensor(offgrid_flow(rng, reach=1)).requires_grad_(True)
        live = photometric_loss(image1, image2, flow, combined_mask(flow, backward, config))
        (g_live,) = torch.autograd.grad(live, flow)
        frozen_mask = combined_mask(flow.detach(), backward, config).clone()
        flow2 = flow.detach().clone().requires_grad_(True)
        (g_frozen,) = torch.autograd.grad(photometric_loss(image1, image2, flow2, frozen_mask), flow2)
        worst = max(worst, float((g_live - g_frozen).abs().max()))
    return worst


@dataclass
class CheckResult:
    name: str
    trial: int
    error: float
    passed: bool


def run(modules=MODULES, trials: int = 20, tol: float = 1e-4, step: float = STEP) -> list[CheckResult]:
    results = []
    for module in modules:
        for trial in range(trials):
            if module == "occlusion":
                err = mask_gradient_stop_error(trial)
                results.append(CheckResult("occlusion/gradient-stop", trial, err, err == 0.0))
                continue
            for case in cases(module, trial):
                err = relative_error(analytic_gradient(case.fn, case.x),
                                     numerical_gradient(case.fn, case.x, step))
                results.append(CheckResult(case.name, trial, err, err < tol))
    return results


def ones_mask(size: int = SIZE) -> torch.Tensor:
    return torch.ones((size, size), dtype=DTYPE)
