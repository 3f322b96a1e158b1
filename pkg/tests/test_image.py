import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from flowkit import oracles
from flowkit.image import (
    DTYPE,
    build_pyramid,
    downsample2x,
    downsample_shape,
    resize_bilinear,
    rgb_to_gray,
    spatial_gradients,
    splat,
    warp,
)


def grid(rows):
    return torch.tensor(rows, dtype=DTYPE)


shapes = st.tuples(st.integers(2, 12), st.integers(2, 12))


@given(shapes, st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_warp_zero_flow_is_identity(shape, channels, seed):
    rng = np.random.default_rng(seed)
    img = torch.as_tensor(rng.uniform(-1, 1, shape + (channels,)))
    out = warp(img, torch.zeros(shape + (2,), dtype=DTYPE))
    assert torch.equal(out, img)


def test_warp_integer_shift_clamps_at_border():
    img = grid([[0.0, 1.0, 2.0, 3.0]])
    flow = torch.zeros((1, 4, 2), dtype=DTYPE)
    flow[..., 0] = 1
    assert warp(img, flow)[..., 0].tolist() == [[1.0, 2.0, 3.0, 3.0]]


@given(st.integers(0, 2**31 - 1))
def test_warp_matches_four_neighbour_oracle(seed):
    rng = np.random.default_rng(seed)
    img = rng.uniform(-1, 1, (8, 8, 3))
    flow = rng.uniform(-3, 3, (8, 8, 2))
    np.testing.assert_allclose(warp(img, flow).numpy(), oracles.warp(img, flow), atol=1e-6)


def test_warp_gradient_takes_right_segment_at_integer_coordinates():
    img = grid([[0.0, 1.0, 4.0, 9.0]])
    flow = torch.zeros((1, 4, 2), dtype=DTYPE, requires_grad=True)
    warp(img, flow)[0, 1, 0].backward()
    assert flow.grad[0, 1, 0].item() == pytest.approx(3.0)


def test_warp_rejects_shape_mismatch():
    with pytest.raises(ValueError, match="spatial shape mismatch"):
        warp(torch.zeros(4, 4, 1, dtype=DTYPE), torch.zeros(4, 5, 2, dtype=DTYPE))
    with pytest.raises(ValueError, match="padding"):
        warp(torch.zeros(4, 4, 1, dtype=DTYPE), torch.zeros(4, 4, 2, dtype=DTYPE), padding="wrap")


def test_warp_is_differentiable_in_source_and_flow():
    rng = np.random.default_rng(0)
    img = torch.as_tensor(rng.normal(size=(5, 6, 2))).requires_grad_(True)
    flow = torch.as_tensor(rng.uniform(-1, 1, (5, 6, 2))).requires_grad_(True)
    warp(img, flow).sum().backward()
    assert img.grad is not None and flow.grad is not None


def test_splat_examples():
    ones = torch.ones((3, 4, 1), dtype=DTYPE)
    assert torch.equal(splat(ones, torch.zeros((3, 4, 2), dtype=DTYPE)), ones)
    weights = torch.zeros((1, 4, 1), dtype=DTYPE)
    weights[0, 0, 0] = 1
    flow = torch.zeros((1, 4, 2), dtype=DTYPE)
    flow[..., 0] = 0.5
    assert splat(weights, flow)[0, :, 0].tolist() == [0.5, 0.5, 0.0, 0.0]


@given(shapes, st.integers(0, 2**31 - 1))
def test_warp_zero_padding_is_adjoint_of_splat(shape, seed):
    rng = np.random.default_rng(seed)
    img = torch.as_tensor(rng.normal(size=shape + (2,)))
    target = torch.as_tensor(rng.normal(size=shape + (2,)))
    flow = torch.as_tensor(rng.uniform(-3, 3, shape + (2,)))
    lhs = (warp(img, flow, padding="zeros") * target).sum()
    rhs = (img * splat(target, flow)).sum()
    assert float(lhs) == pytest.approx(float(rhs), abs=1e-9)


@given(shapes, st.integers(0, 2**31 - 1))
def test_splat_conserves_mass_for_interior_endpoints(shape, seed):
    rng = np.random.default_rng(seed)
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    ends = np.stack([rng.uniform(0, w - 1, shape) - xs, rng.uniform(0, h - 1, shape) - ys], -1)
    weights = torch.as_tensor(rng.uniform(0, 2, shape + (1,)))
    assert float(splat(weights, torch.as_tensor(ends)).sum()) == pytest.approx(float(weights.sum()), abs=1e-9)


def test_downsample_examples():
    assert downsample2x(grid([[0.0, 2.0], [4.0, 6.0]])).flatten().tolist() == [3.0]
    const = torch.full((6, 8, 3), 0.25, dtype=DTYPE)
    out = downsample2x(const)
    assert out.shape == (3, 4, 3)
    assert torch.allclose(out, torch.full_like(out, 0.25))


def test_downsample_matches_block_oracle_on_odd_grid():
    rng = np.random.default_rng(4)
    img = rng.uniform(-1, 1, (9, 9, 2))
    np.testing.assert_allclose(downsample2x(img).numpy(), oracles.box_downsample(img, 1), atol=1e-12)


def test_pyramid_shapes():
    pyr = build_pyramid(torch.zeros((13, 20, 1), dtype=DTYPE), 4)
    assert [tuple(p.shape[:2]) for p in pyr] == [(13, 20), (7, 10), (4, 5), (2, 3)]
    assert downsample_shape(13, 20, 3) == (2, 3)


def test_resize_identity_and_flow_rescale():
    rng = np.random.default_rng(1)
    g = torch.as_tensor(rng.normal(size=(7, 9, 3)))
    assert torch.equal(resize_bilinear(g, 7, 9), g)
    flow = torch.zeros((128, 128, 2), dtype=DTYPE)
    flow[..., 0] = 8
    up = resize_bilinear(flow, 256, 256, rescale_flow_values=True)
    assert torch.equal(up[..., 0], torch.full((256, 256), 16.0, dtype=DTYPE))
    assert torch.equal(up[..., 1], torch.zeros((256, 256), dtype=DTYPE))


def test_resize_ramp_round_trip():
    h, w = 17, 23
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    ramp = torch.as_tensor((0.3 * xs - 0.2 * ys)[..., None])
    there = resize_bilinear(ramp, 2 * h - 1, 2 * w - 1)
    back = resize_bilinear(there, h, w)
    assert float((back - ramp).abs().max()) < 1e-5


def test_resize_rejects_rescaling_images():
    with pytest.raises(ValueError, match="2-channel"):
        resize_bilinear(torch.zeros((4, 4, 3), dtype=DTYPE), 8, 8, rescale_flow_values=True)


def test_spatial_gradients():
    const = torch.full((4, 5, 2), 3.0, dtype=DTYPE)
    dx, dy = spatial_gradients(const)
    assert dx.shape == (4, 4, 2) and dy.shape == (3, 5, 2)
    assert not dx.any() and not dy.any()
    ramp = torch.arange(5, dtype=DTYPE).repeat(4, 1)[..., None]
    dx, dy = spatial_gradients(ramp)
    assert torch.equal(dx, torch.ones_like(dx)) and not dy.any()


def test_second_differences_match_stencil():
    rng = np.random.default_rng(2)
    g = rng.normal(size=(6, 7, 1))
    dx, _ = spatial_gradients(g)
    ddx, _ = spatial_gradients(dx)
    stencil = g[:, 2:] - 2 * g[:, 1:-1] + g[:, :-2]
    np.testing.assert_allclose(ddx.numpy(), stencil, atol=1e-12)


def test_gray_weights():
    img = torch.tensor([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]], dtype=DTYPE)
    assert rgb_to_gray(img)[0, :, 0].tolist() == pytest.approx([0.299, 0.587, 0.114])
    with pytest.raises(ValueError):
        rgb_to_gray(torch.zeros((2, 2, 2), dtype=DTYPE))
