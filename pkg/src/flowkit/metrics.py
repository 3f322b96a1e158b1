"""Endpoint error and KITTI-style outlier rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OUTLIER_PIXELS = 3.0
OUTLIER_FRACTION = 0.05


@dataclass
class EvalResult:
    epe_all: float
    epe_noc: float
    er_all: float
    er_noc: float
    pixel_count: int

    def lines(self) -> list[str]:
        return [f"{k}={v}" for k, v in vars(self).items()]


def _prepare(pred, truth, valid):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {truth.shape} differ")
    if valid is None:
        valid = np.ones(pred.shape[:2], dtype=bool)
    valid = np.asarray(valid) > 0
    if valid.shape != pred.shape[:2]:
        raise ValueError(f"valid mask {valid.shape} does not match flow {pred.shape[:2]}")
    if not valid.any():
        raise ValueError("no valid pixels to evaluate")
    return pred, truth, valid


def endpoint_error(pred, truth, valid=None) -> tuple[np.ndarray, float]:
    """Per-pixel Euclidean distance and its mean over valid pixels."""
    pred, truth, valid = _prepare(pred, truth, valid)
    epe = np.sqrt(((pred - truth) ** 2).sum(-1))
    return epe, float(epe[valid].mean())


def error_rate(pred, truth, valid=None) -> float:
    """Fraction of valid pixels with EPE > 3 px and > 5% of the true flow magnitude."""
    pred, truth, valid = _prepare(pred, truth, valid)
    epe = np.sqrt(((pred - truth) ** 2).sum(-1))
    mag = np.sqrt((truth**2).sum(-1))
    bad = (epe > OUTLIER_PIXELS) & (epe > OUTLIER_FRACTION * mag)
    return float(bad[valid].mean())


def evaluate(pred, truth, valid=None, noc=None) -> EvalResult:
    """Metrics over all valid pixels and over the non-occluded subset ``noc``."""
    pred, truth, valid = _prepare(pred, truth, valid)
    noc_valid = valid if noc is None else valid & (np.asarray(noc) > 0)
    _, epe_all = endpoint_error(pred, truth, valid)
    _, epe_noc = endpoint_error(pred, truth, noc_valid)
    return EvalResult(
        epe_all=epe_all,
        epe_noc=epe_noc,
        er_all=error_rate(pred, truth, valid),
        er_noc=error_rate(pred, truth, noc_valid),
        pixel_count=int(valid.sum()),
    )
