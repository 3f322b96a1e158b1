"""Flow and image file formats: Middlebury ``.flo`` and KITTI 16-bit PNG."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

FLO_TAG = 202021.25
KITTI_SCALE = 64.0
KITTI_OFFSET = 2.0**15


class FlowFormatError(ValueError):
    pass


def write_flo(path, flow) -> None:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("cannot write a flow field with non-finite values")
    h, w, _ = flow.shape
    with open(path, "wb") as fh:
        np.array([FLO_TAG], dtype="<f4").tofile(fh)
        np.array([w, h], dtype="<i4").tofile(fh)
        flow.astype("<f4").tofile(fh)


def read_flo(path) -> np.ndarray:
    """Read a Middlebury flow file as a float32 (H, W, 2) array."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FlowFormatError(f"{path}: header truncated at byte {len(data)} (need 12)")
    tag = np.frombuffer(data, dtype="<f4", count=1)[0]
    if tag != np.float32(FLO_TAG):
        raise FlowFormatError(f"{path}: bad sanity tag {float(tag)!r} at byte 0 (expected {FLO_TAG})")
    w, h = (int(x) for x in np.frombuffer(data, dtype="<i4", count=2, offset=4))
    if w <= 0 or h <= 0 or w > 100_000 or h > 100_000:
        raise FlowFormatError(f"{path}: implausible dimensions {w}x{h} at byte 4")
    need = 12 + 8 * w * h
    if len(data) < need:
        raise FlowFormatError(f"{path}: data truncated at byte {len(data)}, expected {need}")
    return np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=12).reshape(h, w, 2).copy()


def write_kitti(path, flow, valid=None) -> None:
    """Encode as a 16-bit PNG: channels (u * 64 + 2^15, v * 64 + 2^15, valid)."""
    import cv2

    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("cannot write a flow field with non-finite values")
    encoded = np.round(flow * KITTI_SCALE + KITTI_OFFSET)
    if encoded.min() < 0 or encoded.max() > 65535:
        raise ValueError(
            f"flow range [{flow.min():.2f}, {flow.max():.2f}] exceeds the KITTI encoding (+-512 px)"
        )
    if valid is None:
        valid = np.ones(flow.shape[:2])
    png = np.dstack([encoded, (np.asarray(valid) > 0).astype(np.float64)]).astype(np.uint16)
    if not cv2.imwrite(os.fspath(path), png[..., ::-1]):
        raise OSError(f"failed to write {path}")


def decode_kitti(png: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(H, W, 3) uint16 array in RGB order -> (flow, valid)."""
    png = np.asarray(png)
    if png.ndim != 3 or png.shape[2] != 3:
        raise FlowFormatError(f"KITTI flow must have 3 channels, got shape {png.shape}")
    flow = (png[..., :2].astype(np.float64) - KITTI_OFFSET) / KITTI_SCALE
    valid = (png[..., 2] > 0).astype(np.float64)
    return flow, valid


def read_kitti(path) -> tuple[np.ndarray, np.ndarray]:
    import cv2

    raw = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FlowFormatError(f"{path}: not a readable PNG")
    if raw.dtype != np.uint16:
        raise FlowFormatError(f"{path}: expected 16-bit channels, got {raw.dtype}")
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise FlowFormatError(f"{path}: expected 3 channels, got shape {raw.shape}")
    return decode_kitti(raw[..., ::-1])


def read_flow(path, fmt: str | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Read either format; returns ``(flow, valid)`` with ``valid=None`` for ``.flo``."""
    fmt = fmt or ("kitti16" if str(path).lower().endswith(".png") else "middlebury")
    if fmt in ("middlebury", "flo"):
        return read_flo(path).astype(np.float64), None
    if fmt == "kitti16":
        return read_kitti(path)
    raise ValueError(f"unknown flow format {fmt!r}")


def write_flow(path, flow, fmt: str | None = None, valid=None) -> None:
    fmt = fmt or ("kitti16" if str(path).lower().endswith(".png") else "middlebury")
    if fmt in ("middlebury", "flo"):
        write_flo(path, flow)
    elif fmt == "kitti16":
        write_kitti(path, flow, valid)
    else:
        raise ValueError(f"unknown flow format {fmt!r}")


def read_image(path) -> np.ndarray:
    """Load an 8- or 16-bit image as float64 (H, W, C) scaled to [-1, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im,
                             dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr * 2 - 1


def write_image(path, image) -> None:
    """Write a [-1, 1] image as 8-bit PNG."""
    from PIL import Image

    arr = np.clip((np.asarray(image, dtype=np.float64) + 1) / 2, 0, 1)
    arr = np.round(arr * 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path)


def read_mask(path) -> np.ndarray:
    """Any single- or multi-channel image; nonzero first channel means valid."""
    import cv2

    raw = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FlowFormatError(f"{path}: not a readable image")
    if raw.ndim == 3:
        raw = raw[..., ::-1][..., 0] if raw.shape[2] >= 3 else raw[..., 0]
    return (raw > 0).astype(np.float64)
