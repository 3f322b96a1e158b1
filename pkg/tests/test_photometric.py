import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from flowkit import oracles
from flowkit.image import DTYPE
from flowkit.photometric import (
    LossKind,
    PhotometricConfig,
    census_loss,
    charbonnier,
    masked_mean,
    photometric_loss,
    robust_penalty,
    ssim_loss,
)
from flowkit.synth import synth_pair


def texture(seed, shape=(16, 16, 3)):
    return np.random.default_rng(seed).uniform(-1, 1, shape)


def ones(h, w):
    return torch.ones((h, w), dtype=DTYPE)


def test_masked_mean_examples():
    assert float(masked_mean(torch.full((2, 2), 2.0, dtype=DTYPE), ones(2, 2))) == 2.0
    values = torch.tensor([[1.0, 100.0]], dtype=DTYPE)
    assert float(masked_mean(values, torch.tensor([[1.0, 0.0]], dtype=DTYPE))) == 1.0
    assert float(masked_mean(values, torch.zeros((1, 2), dtype=DTYPE))) == 0.0


@given(st.integers(0, 2**31 - 1))
def test_masked_mean_matches_weighted_sum(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(5, 6, 3))
    m = rng.random((5, 6))
    expected = sum(v[i, j, c] * m[i, j] for i in range(5) for j in range(6) for c in range(3))
    expected /= 3 * m.sum() + 1e-16
    assert float(masked_mean(v, m)) == pytest.approx(expected, rel=1e-9)


def test_masked_mean_mask_is_constant():
    v = torch.ones((3, 3), dtype=DTYPE)
    m = torch.full((3, 3), 0.5, dtype=DTYPE, requires_grad=True)
    assert not masked_mean(v, m).requires_grad


def test_penalty_constants():
    charb = PhotometricConfig(kind="charbonnier")
    assert float(robust_penalty(torch.tensor(0.0, dtype=DTYPE), charb)) == pytest.approx(0.001)
    assert float(robust_penalty(torch.tensor(1.0, dtype=DTYPE), charb)) == pytest.approx((1 + 1e-6) ** 0.5)
    l1 = PhotometricConfig(kind="l1")
    assert float(robust_penalty(torch.tensor(0.5, dtype=DTYPE), l1)) == pytest.approx(0.500001)
    with pytest.raises(ValueError):
        robust_penalty(torch.tensor(0.0), PhotometricConfig(kind="census"))


def test_config_validation():
    with pytest.raises(ValueError):
        PhotometricConfig(kind="huber")
    with pytest.raises(ValueError):
        PhotometricConfig(census_window=4)
    with pytest.raises(ValueError):
        PhotometricConfig(charbonnier_alpha=0)


def test_census_identical_images_at_floor():
    img = texture(0)
    assert float(census_loss(img, img, ones(16, 16))) == pytest.approx(0.001, abs=1e-15)


@given(st.floats(-0.5, 0.5), st.integers(0, 2**31 - 1))
def test_census_invariant_to_brightness_offset(offset, seed):
    img = texture(seed)
    base = float(census_loss(img, img, ones(16, 16)))
    assert float(census_loss(img, img + offset, ones(16, 16))) == pytest.approx(base, abs=1e-9)


def test_census_matches_loop_oracle():
    a, b = texture(1), texture(2)
    m = (np.random.default_rng(3).random((16, 16)) < 0.7).astype(float)
    assert float(census_loss(a, b, m)) == pytest.approx(oracles.census_loss(a, b, m), abs=1e-6)


def test_census_ignores_border_band():
    a, b = texture(1), texture(2)
    border = np.ones((16, 16))
    border[3:-3, 3:-3] = 0
    assert float(census_loss(a, b, border)) == 0.0


def test_ssim_examples():
    img = texture(5)
    assert float(ssim_loss(img, img, ones(16, 16))) == pytest.approx(0.0, abs=1e-12)
    assert float(ssim_loss(img, -img, ones(16, 16))) > 0.5


@given(st.integers(0, 2**31 - 1))
def test_ssim_matches_window_oracle(seed):
    a, b = texture(seed, (12, 14, 3)), texture(seed + 1, (12, 14, 3))
    m = (np.random.default_rng(seed).random((12, 14)) < 0.7).astype(float)
    assert float(ssim_loss(a, b, m)) == pytest.approx(oracles.ssim_loss(a, b, m), abs=1e-9)


@pytest.mark.parametrize("kind", list(LossKind))
def test_zero_flow_identical_images_hits_floor(kind):
    cfg = PhotometricConfig(kind=kind)
    img = texture(7)
    loss = photometric_loss(img, img, torch.zeros((16, 16, 2), dtype=DTYPE), ones(16, 16), cfg)
    assert float(loss) == pytest.approx(cfg.floor, abs=1e-12)


@pytest.mark.parametrize("kind", list(LossKind))
def test_integer_translation_realigns_exactly(kind):
    pair = synth_pair(2, "translation", (32, 32), displacement=(3, -2))
    cfg = PhotometricConfig(kind=kind)
    mask = torch.zeros((32, 32), dtype=DTYPE)
    mask[8:-8, 8:-8] = 1
    loss = photometric_loss(pair.image1, pair.image2, pair.true_flow, mask, cfg)
    assert float(loss) == pytest.approx(cfg.floor, abs=1e-9)


def test_loss_gradient_reaches_flow_but_not_mask():
    a, b = texture(8), texture(9)
    flow = torch.full((16, 16, 2), 0.3, dtype=DTYPE, requires_grad=True)
    mask = ones(16, 16).requires_grad_(True)
    photometric_loss(a, b, flow, mask).backward()
    assert flow.grad.abs().sum() > 0
    assert mask.grad is None


def test_charbonnier_is_smooth_at_zero():
    d = torch.zeros(1, dtype=DTYPE, requires_grad=True)
    charbonnier(d).sum().backward()
    assert d.grad.item() == 0.0
