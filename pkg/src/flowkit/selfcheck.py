"""Oracle-equivalence and structural-invariant checks, runnable without pytest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import metrics, oracles
from .image import DTYPE, splat, warp
from .matching import cost_volume, extract_features, normalize_features
from .occlusion import OcclusionConfig, fb_consistency_mask, range_map
from .photometric import census_loss, ssim_loss
from .objective import ObjectiveConfig
from .selfsup import selfsup_labels, selfsup_loss
from .smoothness import SmoothnessConfig, smoothness_loss
from .gradcheck import mask_gradient_stop_error

ORACLE_TOL = 1e-6


@dataclass
class Check:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.error < self.tol if self.tol > 0 else self.error == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: error={self.error:.3e} tol={self.tol:g}"


def random_instance(seed: int):
    """Random images, flows and masks on a 12..24 pixel grid."""
    rng = np.random.default_rng(seed)
    h, w = (int(s) for s in rng.integers(12, 25, size=2))
    return rng, {
        "image1": rng.uniform(-1, 1, (h, w, 3)),
        "image2": rng.uniform(-1, 1, (h, w, 3)),
        "mask": (rng.random((h, w)) < 0.8).astype(np.float64),
        "forward": rng.uniform(-3, 3, (h, w, 2)),
        "backward": rng.uniform(-3, 3, (h, w, 2)),
    }


def oracle_errors(seed: int) -> dict[str, float]:
    rng, d = random_instance(seed)
    h, w = d["mask"].shape
    out = {}
    f1 = normalize_features(extract_features(d["image1"]))
    f2 = normalize_features(extract_features(d["image2"]))
    out["cost_volume"] = float(np.abs(cost_volume(f1, f2, 4) - oracles.cost_volume(f1, f2, 4)).max())
    out["census_loss"] = abs(float(census_loss(d["image1"], d["image2"], d["mask"]))
                             - oracles.census_loss(d["image1"], d["image2"], d["mask"]))
    out["ssim_loss"] = abs(float(ssim_loss(d["image1"], d["image2"], d["mask"]))
                           - oracles.ssim_loss(d["image1"], d["image2"], d["mask"]))
    worst = 0.0
    for order in (1, 2):
        for level in (0, 1):
            fh, fw = -(-h // 2**level), -(-w // 2**level)
            flow = rng.uniform(-3, 3, (fh, fw, 2))
            cfg = SmoothnessConfig(order=order, level=level, edge_weight=3.0)
            got = float(smoothness_loss(flow, d["image1"], cfg))
            worst = max(worst, abs(got - oracles.smoothness_loss(flow, d["image1"], order, 3.0, level)))
    out["smoothness_loss"] = worst
    out["range_map"] = float(np.abs(range_map(d["backward"]).numpy() - oracles.range_map(d["backward"])).max())
    # near-consistent pairs so both outcomes of the test occur
    fwd = d["forward"]
    bwd = -fwd + rng.normal(0, 0.6, fwd.shape)
    out["fb_consistency_mask"] = float(np.abs(
        fb_consistency_mask(fwd, bwd, OcclusionConfig()).numpy() - oracles.fb_consistency_mask(fwd, bwd)
    ).max())
    valid = d["mask"] > 0
    truth = d["backward"] * 3
    out["endpoint_error"] = abs(metrics.endpoint_error(fwd, truth, valid)[1]
                                - oracles.endpoint_error(fwd, truth, valid))
    out["error_rate"] = abs(metrics.error_rate(fwd, truth, valid) - oracles.error_rate(fwd, truth, valid))
    return out


def oracle_checks(instances: int = 10) -> list[Check]:
    worst: dict[str, float] = {}
    for seed in range(instances):
        for name, err in oracle_errors(seed).items():
            worst[name] = max(worst.get(name, 0.0), err)
    return [Check(f"oracle/{name}", err, ORACLE_TOL) for name, err in worst.items()]


def invariant_errors(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    h, w = 16, 20
    image = torch.as_tensor(rng.uniform(-1, 1, (h, w, 3)))
    out = {}
    out["warp_identity"] = float((warp(image, torch.zeros(h, w, 2, dtype=DTYPE)) - image).abs().max())

    flow = torch.as_tensor(rng.uniform(-3, 3, (h, w, 2)))
    target = torch.as_tensor(rng.normal(size=(h, w, 3)))
    lhs = (warp(image, flow, padding="zeros") * target).sum()
    rhs = (image * splat(target, flow)).sum()
    out["warp_splat_adjoint"] = float((lhs - rhs).abs() / max(float(lhs.abs()), 1.0))

    # endpoints strictly inside so all four bilinear taps land on the grid
    ys, xs = np.mgrid[0:h, 0:w]
    px = rng.uniform(0.5, w - 1.5, (h, w))
    py = rng.uniform(0.5, h - 1.5, (h, w))
    inner = torch.as_tensor(np.stack([px - xs, py - ys], axis=-1))
    weights = torch.as_tensor(rng.uniform(0, 2, (h, w, 1)))
    out["splat_mass"] = float((splat(weights, inner).sum() - weights.sum()).abs())

    feats = extract_features(image)
    once = normalize_features(feats)
    out["normalize_idempotent"] = float(np.abs(normalize_features(once) - once).max())
    vol = cost_volume(once, once, 2)
    centre = (2 * 2 + 1) ** 2 // 2
    out["self_cost_mean"] = abs(float(vol[..., centre].mean()) - once.shape[-1])

    out["mask_gradient_stop"] = mask_gradient_stop_error(seed)

    teacher = torch.as_tensor(rng.uniform(-2, 2, (64, 64, 2))).requires_grad_(True)
    back = torch.as_tensor(rng.uniform(-2, 2, (64, 64, 2)))
    out["teacher_gradient_stop"] = teacher_gradient(teacher, back)
    return out


def teacher_gradient(teacher: torch.Tensor, backward: torch.Tensor, crop: int = 8) -> float:
    """Max |d selfsup_loss / d teacher|; the labels are constants, so this is 0."""
    labels, mask = selfsup_labels(teacher, backward, crop, tuple(teacher.shape[:2]))
    student = (labels.detach() + 0.5).requires_grad_(True)
    loss = selfsup_loss(student, -student.detach(), labels, mask, ObjectiveConfig(),
                        student_fb_mask=torch.zeros(labels.shape[:2], dtype=DTYPE))
    (grad,) = torch.autograd.grad(loss + 0.0 * teacher.sum(), teacher)
    return float(grad.abs().max())


INVARIANT_TOLS = {
    "warp_identity": 0.0,
    "warp_splat_adjoint": 1e-6,
    "splat_mass": 1e-6,
    "normalize_idempotent": 1e-6,
    "self_cost_mean": 1e-5,
    "mask_gradient_stop": 0.0,
    "teacher_gradient_stop": 0.0,
}


def invariant_checks(seed: int = 0) -> list[Check]:
    return [Check(f"invariant/{k}", v, INVARIANT_TOLS[k]) for k, v in invariant_errors(seed).items()]


def run_all() -> list[Check]:
    return oracle_checks() + invariant_checks()
