"""Slow, loop-based reference implementations written straight from the definitions.

They share no code with the vectorized versions and exist only to check them.
Inputs are numpy arrays in (H, W, C) / (H, W) layout.
"""

from __future__ import annotations

import math

import numpy as np

GRAY = (0.299, 0.587, 0.114)


def _bilinear(src: np.ndarray, x: float, y: float, clamp: bool = True) -> np.ndarray:
    h, w = src.shape[:2]
    if clamp:
        x = min(max(x, 0.0), w - 1.0)
        y = min(max(y, 0.0), h - 1.0)
    x0, y0 = math.floor(x), math.floor(y)
    out = np.zeros(src.shape[2:])
    for yy, wy in ((y0, 1 - (y - y0)), (y0 + 1, y - y0)):
        for xx, wx in ((x0, 1 - (x - x0)), (x0 + 1, x - x0)):
            if 0 <= yy < h and 0 <= xx < w:
                out = out + wy * wx * src[yy, xx]
    return out


def warp(source, flow) -> np.ndarray:
    source, flow = np.asarray(source, float), np.asarray(flow, float)
    h, w = flow.shape[:2]
    out = np.zeros((h, w) + source.shape[2:])
    for y in range(h):
        for x in range(w):
            out[y, x] = _bilinear(source, x + flow[y, x, 0], y + flow[y, x, 1])
    return out


def range_map(backward) -> np.ndarray:
    backward = np.asarray(backward, float)
    h, w = backward.shape[:2]
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            px, py = x + backward[y, x, 0], y + backward[y, x, 1]
            x0, y0 = math.floor(px), math.floor(py)
            for yy in (y0, y0 + 1):
                for xx in (x0, x0 + 1):
                    if 0 <= yy < h and 0 <= xx < w:
                        out[yy, xx] += max(0.0, 1 - abs(px - xx)) * max(0.0, 1 - abs(py - yy))
    return out


def fb_consistency_mask(forward, backward, alpha1: float = 0.01, alpha2: float = 0.5) -> np.ndarray:
    forward, backward = np.asarray(forward, float), np.asarray(backward, float)
    h, w = forward.shape[:2]
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            f = forward[y, x]
            b = _bilinear(backward, x + f[0], y + f[1])
            lhs = (f[0] + b[0]) ** 2 + (f[1] + b[1]) ** 2
            rhs = alpha1 * (f @ f + b @ b) + alpha2
            out[y, x] = 1.0 if lhs < rhs else 0.0
    return out


def normalize(features) -> np.ndarray:
    f = np.asarray(features, float)
    vals = f.ravel().tolist()
    mu = sum(vals) / len(vals)
    sigma = math.sqrt(sum((v - mu) ** 2 for v in vals) / len(vals))
    return (f - mu) / max(sigma, 1e-6)


def cost_volume(f1, f2, radius: int) -> np.ndarray:
    f1, f2 = np.asarray(f1, float), np.asarray(f2, float)
    h, w, d = f1.shape
    n = 2 * radius + 1
    out = np.zeros((h, w, n * n))
    for y in range(h):
        for x in range(w):
            k = 0
            for v in range(-radius, radius + 1):
                for u in range(-radius, radius + 1):
                    yy, xx = y + v, x + u
                    if 0 <= yy < h and 0 <= xx < w:
                        out[y, x, k] = sum(f1[y, x, c] * f2[yy, xx, c] for c in range(d))
                    k += 1
    return out


def _gray(image: np.ndarray) -> np.ndarray:
    if image.shape[2] == 1:
        return image[..., 0]
    return GRAY[0] * image[..., 0] + GRAY[1] * image[..., 1] + GRAY[2] * image[..., 2]


def census_loss(image1, warped2, mask, window: int = 7, alpha: float = 0.5, eps: float = 0.001) -> float:
    g1, g2 = _gray(np.asarray(image1, float)), _gray(np.asarray(warped2, float))
    mask = np.asarray(mask, float)
    h, w = g1.shape
    r = window // 2
    num = den = 0.0
    for y in range(r, h - r):
        for x in range(r, w - r):
            dist = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    a = g1[y + dy, x + dx] - g1[y, x]
                    b = g2[y + dy, x + dx] - g2[y, x]
                    sa = a / math.sqrt(0.0081 + a * a)
                    sb = b / math.sqrt(0.0081 + b * b)
                    dist += (sa - sb) ** 2 / (0.1 + (sa - sb) ** 2)
            num += mask[y, x] * (dist * dist + eps * eps) ** alpha
            den += mask[y, x]
    return num / (den + 1e-16)


def ssim_loss(image1, warped2, mask, window: int = 3, c1: float = 1e-4, c2: float = 9e-4) -> float:
    x_img = (np.asarray(image1, float) + 1) / 2
    y_img = (np.asarray(warped2, float) + 1) / 2
    mask = np.asarray(mask, float)
    h, w, channels = x_img.shape
    r = window // 2
    n = window * window
    num = den = 0.0
    for y in range(r, h - r):
        for x in range(r, w - r):
            for c in range(channels):
                a = [x_img[y + dy, x + dx, c] for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
                b = [y_img[y + dy, x + dx, c] for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
                ma, mb = sum(a) / n, sum(b) / n
                va = sum((p - ma) ** 2 for p in a) / n
                vb = sum((q - mb) ** 2 for q in b) / n
                cov = sum((p - ma) * (q - mb) for p, q in zip(a, b)) / n
                s = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
                num += mask[y, x] * min(max((1 - s) / 2, 0.0), 1.0)
                den += mask[y, x]
    return num / (den + 1e-16)


def box_downsample(image, times: int) -> np.ndarray:
    image = np.asarray(image, float)
    for _ in range(times):
        h, w, c = image.shape
        nh, nw = (h + 1) // 2, (w + 1) // 2
        out = np.zeros((nh, nw, c))
        for y in range(nh):
            for x in range(nw):
                cells = [image[yy, xx] for yy in (2 * y, 2 * y + 1) for xx in (2 * x, 2 * x + 1)
                         if yy < h and xx < w]
                out[y, x] = sum(cells) / len(cells)
        image = out
    return image


def smoothness_loss(flow, image_full, order: int = 1, edge_weight: float = 150.0, level: int = 0) -> float:
    flow = np.asarray(flow, float)
    image = box_downsample(image_full, level)
    h, w, channels = image.shape

    def weight(y0, x0, y1, x1):
        return math.exp(-edge_weight / channels * sum(abs(image[y1, x1, c] - image[y0, x0, c])
                                                      for c in range(channels)))

    sx = sy = 0.0
    nx = ny = 0
    for c in range(2):
        for y in range(h):
            for x in range(w):
                if order == 1:
                    if x + 1 < w:
                        sx += weight(y, x, y, x + 1) * abs(flow[y, x + 1, c] - flow[y, x, c])
                        nx += 1
                    if y + 1 < h:
                        sy += weight(y, x, y + 1, x) * abs(flow[y + 1, x, c] - flow[y, x, c])
                        ny += 1
                else:
                    if 0 < x < w - 1:
                        d2 = flow[y, x + 1, c] - 2 * flow[y, x, c] + flow[y, x - 1, c]
                        sx += weight(y, x, y, x + 1) * abs(d2)
                        nx += 1
                    if 0 < y < h - 1:
                        d2 = flow[y + 1, x, c] - 2 * flow[y, x, c] + flow[y - 1, x, c]
                        sy += weight(y, x, y + 1, x) * abs(d2)
                        ny += 1
    return sx / nx + sy / ny


def endpoint_error(pred, truth, valid=None) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    h, w = pred.shape[:2]
    total, count = 0.0, 0
    for y in range(h):
        for x in range(w):
            if valid is None or valid[y, x]:
                total += math.hypot(pred[y, x, 0] - truth[y, x, 0], pred[y, x, 1] - truth[y, x, 1])
                count += 1
    return total / count


def error_rate(pred, truth, valid=None) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    h, w = pred.shape[:2]
    bad, count = 0, 0
    for y in range(h):
        for x in range(w):
            if valid is None or valid[y, x]:
                e = math.hypot(pred[y, x, 0] - truth[y, x, 0], pred[y, x, 1] - truth[y, x, 1])
                m = math.hypot(truth[y, x, 0], truth[y, x, 1])
                bad += int(e > 3 and e > 0.05 * m)
                count += 1
    return bad / count
