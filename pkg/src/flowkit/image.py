"""Grid primitives: bilinear warping and splatting, pyramids, resizing, derivatives.

All grids are channels-last ``(H, W, C)`` float64 tensors; masks are ``(H, W)``.
Flow fields carry ``(u, v)`` = (horizontal, vertical) displacement in pixels.
Every op is written with differentiable torch primitives so autograd gives the
exact gradient of the piecewise-bilinear interpolants.
"""

from __future__ import annotations

import math

import numpy as np
import torch

DTYPE = torch.float64


def as_grid(x, *, channels_last: bool = True) -> torch.Tensor:
    """Convert an array-like to a float64 ``(H, W, C)`` tensor.

    2-D inputs get a trailing channel axis. Tensors are not copied, so autograd
    history is preserved.
    """
    if not isinstance(x, torch.Tensor):
        x = torch.as_tensor(np.asarray(x, dtype=np.float64))
    if x.dtype != DTYPE:
        x = x.to(DTYPE)
    if x.ndim == 2 and channels_last:
        x = x.unsqueeze(-1)
    if x.ndim != 3:
        raise ValueError(f"expected an (H, W, C) grid, got shape {tuple(x.shape)}")
    return x


def as_mask(m) -> torch.Tensor:
    if not isinstance(m, torch.Tensor):
        m = torch.as_tensor(np.asarray(m, dtype=np.float64))
    m = m.to(DTYPE)
    if m.ndim == 3 and m.shape[-1] == 1:
        m = m[..., 0]
    if m.ndim != 2:
        raise ValueError(f"expected an (H, W) mask, got shape {tuple(m.shape)}")
    return m


def _check_flow(source: torch.Tensor, flow: torch.Tensor) -> None:
    if flow.ndim != 3 or flow.shape[-1] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {tuple(flow.shape)}")
    if source.shape[:2] != flow.shape[:2]:
        raise ValueError(
            f"spatial shape mismatch: source {tuple(source.shape[:2])} "
            f"vs flow {tuple(flow.shape[:2])}"
        )


def pixel_grid(height: int, width: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Return ``(xs, ys)`` integer pixel coordinates as float tensors of shape (H, W)."""
    ys, xs = torch.meshgrid(
        torch.arange(height, dtype=DTYPE), torch.arange(width, dtype=DTYPE), indexing="ij"
    )
    return xs, ys


def warp(source, flow, padding: str = "border") -> torch.Tensor:
    """Bilinearly sample ``source`` at ``(x + u, y + v)``.

    Args:
        source: (H, W, C) image or flow field.
        flow: (H, W, 2) displacement field.
        padding: ``"border"`` clamps sample coordinates to the grid (used for
            losses), ``"zeros"`` treats out-of-grid neighbours as 0 (the exact
            adjoint of :func:`splat`).

    At integer sample coordinates the gradient w.r.t. the flow takes the
    right-hand segment of the piecewise-linear kernel.
    """
    source = as_grid(source)
    flow = as_grid(flow)
    _check_flow(source, flow)
    h, w, c = source.shape
    xs, ys = pixel_grid(h, w)
    px = xs + flow[..., 0]
    py = ys + flow[..., 1]
    flat = source.reshape(h * w, c)

    if padding == "border":
        px = px.clamp(0, w - 1)
        py = py.clamp(0, h - 1)
        x0 = torch.floor(px).detach().clamp(max=max(w - 2, 0))
        y0 = torch.floor(py).detach().clamp(max=max(h - 2, 0))
        fx = (px - x0).unsqueeze(-1)
        fy = (py - y0).unsqueeze(-1)
        x0 = x0.long()
        y0 = y0.long()
        x1 = (x0 + 1).clamp(max=w - 1)
        y1 = (y0 + 1).clamp(max=h - 1)
        v00 = flat[y0 * w + x0]
        v01 = flat[y0 * w + x1]
        v10 = flat[y1 * w + x0]
        v11 = flat[y1 * w + x1]
        return (
            (1 - fy) * ((1 - fx) * v00 + fx * v01)
            + fy * ((1 - fx) * v10 + fx * v11)
        )
    if padding == "zeros":
        x0f = torch.floor(px).detach()
        y0f = torch.floor(py).detach()
        fx = px - x0f
        fy = py - y0f
        x0 = x0f.long()
        y0 = y0f.long()
        out = torch.zeros((h, w, c), dtype=DTYPE)
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                xi = x0 + dx
                yi = y0 + dy
                inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
                idx = (yi.clamp(0, h - 1) * w + xi.clamp(0, w - 1))
                weight = (wx * wy * inside.to(DTYPE)).unsqueeze(-1)
                out = out + weight * flat[idx]
        return out
    raise ValueError(f"unknown padding mode {padding!r}")


def splat(weights, flow) -> torch.Tensor:
    """Scatter each pixel's weight onto the four pixels around ``(x + u, y + v)``.

    Mass landing outside the grid is dropped. This is the adjoint of
    ``warp(..., padding="zeros")``.
    """
    weights = as_grid(weights)
    flow = as_grid(flow)
    _check_flow(weights, flow)
    h, w, c = weights.shape
    xs, ys = pixel_grid(h, w)
    px = xs + flow[..., 0]
    py = ys + flow[..., 1]
    x0f = torch.floor(px).detach()
    y0f = torch.floor(py).detach()
    fx = px - x0f
    fy = py - y0f
    x0 = x0f.long()
    y0 = y0f.long()
    out = torch.zeros((h * w, c), dtype=DTYPE)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            inside = ((xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)).reshape(-1)
            idx = (yi * w + xi).reshape(-1)[inside]
            contrib = ((wx * wy).unsqueeze(-1) * weights).reshape(h * w, c)[inside]
            out = out.index_add(0, idx, contrib)
    return out.reshape(h, w, c)


def downsample2x(image) -> torch.Tensor:
    """Halve resolution by 2x2 block means; trailing odd rows/columns average what exists."""
    image = as_grid(image)
    h, w, c = image.shape
    if h < 2 or w < 2:
        raise ValueError(f"cannot downsample a {h}x{w} grid")
    ph, pw = h % 2, w % 2
    padded = torch.nn.functional.pad(image, (0, 0, 0, pw, 0, ph))
    ones = torch.nn.functional.pad(torch.ones((h, w, 1), dtype=DTYPE), (0, 0, 0, pw, 0, ph))
    hh, ww = padded.shape[0] // 2, padded.shape[1] // 2
    sums = padded.reshape(hh, 2, ww, 2, c).sum(dim=(1, 3))
    counts = ones.reshape(hh, 2, ww, 2, 1).sum(dim=(1, 3))
    return sums / counts


def downsample_shape(height: int, width: int, times: int = 1) -> tuple[int, int]:
    for _ in range(times):
        height, width = math.ceil(height / 2), math.ceil(width / 2)
    return height, width


def build_pyramid(image, levels: int) -> list[torch.Tensor]:
    """Return ``[level0, level1, ...]`` with ``levels`` entries, level 0 being the input."""
    pyramid = [as_grid(image)]
    for _ in range(levels - 1):
        pyramid.append(downsample2x(pyramid[-1]))
    return pyramid


def _interp_matrix(old: int, new: int) -> torch.Tensor:
    """(new, old) corner-aligned linear interpolation matrix."""
    mat = torch.zeros((new, old), dtype=DTYPE)
    if old == 1:
        mat[:, 0] = 1.0
        return mat
    if new == 1:
        mat[0, 0] = 1.0
        return mat
    pos = np.arange(new) * (old - 1) / (new - 1)
    i0 = np.minimum(np.floor(pos).astype(int), old - 2)
    frac = pos - i0
    rows = np.arange(new)
    mat[rows, i0] = torch.as_tensor(1.0 - frac)
    mat[rows, i0 + 1] += torch.as_tensor(frac)
    return mat


def resize_bilinear(grid, new_height: int, new_width: int, rescale_flow_values: bool = False):
    """Corner-aligned bilinear resize.

    With ``rescale_flow_values`` the grid must be a 2-channel flow field; u is
    scaled by ``new_width / old_width`` and v by ``new_height / old_height``.
    """
    grid = as_grid(grid)
    h, w, c = grid.shape
    if new_height < 2 or new_width < 2:
        raise ValueError(f"target size must be at least 2x2, got {new_height}x{new_width}")
    if rescale_flow_values and c != 2:
        raise ValueError("rescale_flow_values requires a 2-channel flow field, not an image")
    if (new_height, new_width) == (h, w):
        out = grid
    else:
        ry = _interp_matrix(h, new_height)
        rx = _interp_matrix(w, new_width)
        out = torch.einsum("ih,hwc,jw->ijc", ry, grid, rx)
    if rescale_flow_values:
        scale = torch.tensor([new_width / w, new_height / h], dtype=DTYPE)
        out = out * scale
    return out


def spatial_gradients(grid) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences: ``d_dx`` is (H, W-1, C), ``d_dy`` is (H-1, W, C)."""
    grid = as_grid(grid)
    h, w, _ = grid.shape
    if h < 2 or w < 2:
        raise ValueError(f"spatial gradients need at least 2x2, got {h}x{w}")
    return grid[:, 1:] - grid[:, :-1], grid[1:] - grid[:-1]


def rgb_to_gray(image) -> torch.Tensor:
    image = as_grid(image)
    if image.shape[-1] == 1:
        return image
    if image.shape[-1] != 3:
        raise ValueError(f"expected 1 or 3 channels, got {image.shape[-1]}")
    coeffs = torch.tensor([0.299, 0.587, 0.114], dtype=DTYPE)
    return (image * coeffs).sum(-1, keepdim=True)
