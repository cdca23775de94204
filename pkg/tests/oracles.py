"""Slow, obviously-correct reference implementations used only by the tests."""

from __future__ import annotations

from collections import deque

import numpy as np


def raster_iou(a, b, size: int = 64) -> float:
    """IoU by painting both half-open boxes onto a pixel grid."""
    ma = np.zeros((size, size), dtype=bool)
    mb = np.zeros((size, size), dtype=bool)
    ma[a[1]:a[3], a[0]:a[2]] = True
    mb[b[1]:b[3], b[0]:b[2]] = True
    union = np.logical_or(ma, mb).sum()
    return 0.0 if union == 0 else np.logical_and(ma, mb).sum() / union


N4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
N8 = N4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def flood_fill_holes(bits: np.ndarray) -> np.ndarray:
    """Background pixels not 4-reachable from the border become foreground."""
    h, w = bits.shape
    seen = np.zeros_like(bits)
    q = deque()
    for y in range(h):
        for x in range(w):
            if (y in (0, h - 1) or x in (0, w - 1)) and not bits[y, x]:
                seen[y, x] = True
                q.append((y, x))
    while q:
        y, x = q.popleft()
        for dy, dx in N4:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and not bits[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                q.append((ny, nx))
    return ~seen


def components(bits: np.ndarray, nbrs=N8) -> list[list[tuple[int, int]]]:
    h, w = bits.shape
    seen = np.zeros_like(bits)
    out = []
    for sy in range(h):
        for sx in range(w):
            if not bits[sy, sx] or seen[sy, sx]:
                continue
            comp, q = [], deque([(sy, sx)])
            seen[sy, sx] = True
            while q:
                y, x = q.popleft()
                comp.append((y, x))
                for dy, dx in nbrs:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and bits[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        q.append((ny, nx))
            out.append(comp)
    return out


def drop_small(bits: np.ndarray, min_area: int) -> np.ndarray:
    out = np.zeros_like(bits)
    for comp in components(bits):
        if len(comp) >= min_area:
            for y, x in comp:
                out[y, x] = True
    return out


def disc_offsets(r: int) -> list[tuple[int, int]]:
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dy * dy + dx * dx <= r * r]


def _shifted(bits: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    """out[y, x] = bits[y + dy, x + dx], with ``fill`` outside the frame."""
    h, w = bits.shape
    out = np.full_like(bits, fill)
    ys, ye = max(0, -dy), min(h, h - dy)
    xs, xe = max(0, -dx), min(w, w - dx)
    out[ys:ye, xs:xe] = bits[ys + dy:ye + dy, xs + dx:xe + dx]
    return out


def dilate_ref(bits: np.ndarray, r: int) -> np.ndarray:
    out = np.zeros_like(bits)
    for dy, dx in disc_offsets(r):
        out |= _shifted(bits, dy, dx, False)
    return out


def erode_ref(bits: np.ndarray, r: int) -> np.ndarray:
    """Pixels outside the frame count as foreground."""
    out = np.ones_like(bits)
    for dy, dx in disc_offsets(r):
        out &= _shifted(bits, dy, dx, True)
    return out


def smooth_ref(bits: np.ndarray, r: int) -> np.ndarray:
    closed = erode_ref(dilate_ref(bits, r), r)
    return dilate_ref(erode_ref(closed, r), r)


def ssim_loop(x: np.ndarray, y: np.ndarray, k: int = 8) -> float:
    """Windowed SSIM with explicit loops over every k x k patch (population moments)."""
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    h, w = x.shape
    vals = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            a = x[i:i + k, j:j + k].astype(np.float64)
            b = y[i:i + k, j:j + k].astype(np.float64)
            ma, mb = a.mean(), b.mean()
            va, vb = a.var(), b.var()
            cov = ((a - ma) * (b - mb)).mean()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def random_blob_mask(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Blobby mask with holes and specks: thresholded smoothed noise plus salt-and-pepper."""
    z = rng.normal(size=(size, size))
    k = np.ones(5) / 5
    for axis in (0, 1):
        z = np.apply_along_axis(lambda v: np.convolve(v, k, mode="same"), axis, z)
    bits = z > rng.uniform(-0.2, 0.3)
    flip = rng.random((size, size)) < rng.uniform(0.0, 0.04)
    return bits ^ flip
