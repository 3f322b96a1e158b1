import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from flowkit import oracles
from flowkit.image import DTYPE
from flowkit.occlusion import (
    OcclusionConfig,
    combined_mask,
    fb_consistency_mask,
    invalid_mask,
    occlusion_mask,
    range_map,
    range_occlusion_mask,
)


def const_flow(u, v, shape=(6, 7)):
    f = torch.zeros(shape + (2,), dtype=DTYPE)
    f[..., 0], f[..., 1] = u, v
    return f


def test_fb_examples():
    assert torch.equal(fb_consistency_mask(const_flow(1, 0), const_flow(-1, 0)), torch.ones(6, 7, dtype=DTYPE))
    assert not fb_consistency_mask(const_flow(5, 0), const_flow(0, 0)).any()


@given(st.integers(0, 2**31 - 1))
def test_fb_matches_inequality_oracle(seed):
    rng = np.random.default_rng(seed)
    f = rng.uniform(-3, 3, (9, 11, 2))
    b = -f + rng.normal(0, 0.7, f.shape)
    got = fb_consistency_mask(f, b).numpy()
    assert np.array_equal(got, oracles.fb_consistency_mask(f, b))


def test_range_map_examples():
    assert torch.equal(range_map(const_flow(0, 0)), torch.ones(6, 7, dtype=DTYPE))
    shifted = range_map(const_flow(1, 0))
    assert not shifted[:, 0].any()
    assert torch.equal(shifted[:, 1:], torch.ones(6, 6, dtype=DTYPE))
    mask = range_occlusion_mask(const_flow(1, 0))
    assert not mask[:, 0].any() and mask[:, 1:].all()
    assert range_occlusion_mask(const_flow(0, 0)).all()


@given(st.integers(0, 2**31 - 1))
def test_range_map_matches_splat_oracle(seed):
    rng = np.random.default_rng(seed)
    b = rng.uniform(-4, 4, (10, 12, 2))
    expected = oracles.range_map(b)
    np.testing.assert_allclose(range_map(b).numpy(), expected, atol=1e-12)
    assert np.array_equal(range_occlusion_mask(b).numpy(), (expected >= 1).astype(float))


def test_range_map_total_mass_equals_in_bounds_count_for_integer_flow():
    rng = np.random.default_rng(3)
    b = rng.integers(-3, 4, (8, 8, 2)).astype(float)
    ys, xs = np.mgrid[0:8, 0:8]
    inside = ((xs + b[..., 0] >= 0) & (xs + b[..., 0] <= 7) & (ys + b[..., 1] >= 0) & (ys + b[..., 1] <= 7))
    assert float(range_map(b).sum()) == pytest.approx(float(inside.sum()))


def test_invalid_mask_examples():
    w = 7
    assert invalid_mask(const_flow(0, 0)).all()
    assert not invalid_mask(const_flow(w, 0)).any()
    half = invalid_mask(const_flow(0.5, 0))
    assert not half[:, -1].any() and half[:, :-1].all()


def test_occlusion_dispatch_and_activation():
    fwd, bwd = const_flow(5, 0), const_flow(0, 0)
    fb = OcclusionConfig(method="fb", activation_fraction=0.2)
    early = combined_mask(fwd, bwd, fb, progress=0.1)
    assert torch.equal(early, invalid_mask(fwd))
    late = combined_mask(fwd, bwd, fb, progress=0.5)
    assert not late.any()
    none = OcclusionConfig(method="none")
    assert combined_mask(const_flow(0.5, 0.5), const_flow(0, 0), none)[:-1, :-1].all()


def test_range_combined_is_product_of_parts():
    rng = np.random.default_rng(5)
    f = rng.uniform(-2, 2, (8, 9, 2))
    b = rng.uniform(-2, 2, (8, 9, 2))
    got = combined_mask(f, b, OcclusionConfig(method="range")).numpy()
    expected = invalid_mask(f).numpy() * (oracles.range_map(b) >= 1)
    assert np.array_equal(got, expected)


def test_masks_are_detached_and_validated():
    f = const_flow(1, 0).requires_grad_(True)
    assert not occlusion_mask(f, const_flow(-1, 0), OcclusionConfig(method="fb")).requires_grad
    assert not combined_mask(f, const_flow(-1, 0)).requires_grad
    with pytest.raises(ValueError, match="progress"):
        combined_mask(f, const_flow(-1, 0), progress=1.5)
    with pytest.raises(ValueError, match="flow shapes"):
        fb_consistency_mask(const_flow(0, 0), const_flow(0, 0, (6, 8)))
    with pytest.raises(ValueError):
        OcclusionConfig(method="brox")
    with pytest.raises(ValueError):
        OcclusionConfig(alpha1=-1)
