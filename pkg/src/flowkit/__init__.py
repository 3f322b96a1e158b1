"""Unsupervised optical flow objectives and a per-pair coarse-to-fine flow estimator."""

from .image import build_pyramid, downsample2x, resize_bilinear, splat, warp
from .matching import argmax_flow, cost_volume, extract_features, normalize_features
from .metrics import EvalResult, endpoint_error, error_rate, evaluate
from .objective import ObjectiveConfig, total_loss
from .occlusion import (
    OcclusionConfig,
    combined_mask,
    fb_consistency_mask,
    invalid_mask,
    range_map,
    range_occlusion_mask,
)
from .photometric import PhotometricConfig, census_loss, photometric_loss, ssim_loss
from .selfsup import selfsup_labels, selfsup_loss
from .smoothness import SmoothnessConfig, smoothness_loss
from .solver import FlowEstimate, NonFiniteLossError, SolverConfig, estimate_flow
from .synth import SyntheticPair, synth_pair

__version__ = "0.1.0"
