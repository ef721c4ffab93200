"""Image arrays, filters, composition and overlap geometry.

Images are float64 arrays of shape (H, W, C) with C in {1, 3}; masks are
boolean or float arrays of shape (H, W).
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

TAU_VALID = 1.0 / 255.0
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


class ImageError(ValueError):
    pass


class PartitionError(ValueError):
    pass


def as_image(arr) -> np.ndarray:
    """Coerce a 2-D or 3-D array into (H, W, C) float64."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise ImageError(f"expected (H, W) or (H, W, 1|3) array, got shape {a.shape}")
    return a


def load_image(path) -> np.ndarray:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with Image.open(path) as im:
        if im.mode == "L":
            data = np.asarray(im, dtype=np.float64)[:, :, None]
        elif im.mode == "RGB":
            data = np.asarray(im, dtype=np.float64)
        elif im.mode == "1":
            data = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None]
        else:
            raise ImageError(f"unsupported image mode {im.mode!r} in {path}; need 8-bit gray or RGB")
    return data / 255.0


def save_image(img, path) -> None:
    a = as_image(img)
    q = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    if q.shape[2] == 1:
        out = Image.fromarray(q[:, :, 0], mode="L")
    else:
        out = Image.fromarray(q, mode="RGB")
    out.save(path)


def load_mask(path) -> np.ndarray:
    return load_image(path)[:, :, 0] >= 0.5


def save_mask(mask, path) -> None:
    m = np.asarray(mask, dtype=bool)
    Image.fromarray(np.where(m, 255, 0).astype(np.uint8), mode="L").save(path)


def rgb_to_gray(img) -> np.ndarray:
    a = as_image(img)
    if a.shape[2] != 3:
        raise ImageError(f"rgb_to_gray needs 3 channels, got {a.shape[2]}")
    return (a @ GRAY_WEIGHTS)[:, :, None]


def to_gray(img) -> np.ndarray:
    """Gray (H, W) plane from either a 1- or 3-channel image."""
    a = as_image(img)
    return a[:, :, 0] if a.shape[2] == 1 else a @ GRAY_WEIGHTS


def sobel_edges(img) -> np.ndarray:
    """Sobel gradient magnitude with replicate padding (not normalized)."""
    a = as_image(img)
    if a.shape[2] != 1:
        raise ImageError("sobel_edges expects a single-channel image")
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ImageError(f"image {a.shape[:2]} smaller than the 3x3 kernel")
    p = np.pad(a[:, :, 0], 1, mode="edge")
    # difference first, then smooth: constant regions give exact zeros
    dx = p[:, 2:] - p[:, :-2]
    dy = p[2:, :] - p[:-2, :]
    gx = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return np.hypot(gx, gy)[:, :, None]


def fill_invalid(img, valid) -> np.ndarray:
    """Copy of ``img`` with every pixel outside ``valid`` set to its nearest valid pixel."""
    a = as_image(img)
    valid = np.asarray(valid, bool)
    if valid.shape != a.shape[:2]:
        raise ImageError(f"mask shape {valid.shape} does not match image {a.shape[:2]}")
    if valid.all() or not valid.any():
        return a.copy()
    iy, ix = ndimage.distance_transform_edt(~valid, return_distances=False, return_indices=True)
    return a[iy, ix]


def _check_window(m: int, h: int, w: int) -> None:
    if m < 3 or m % 2 == 0:
        raise ImageError(f"window size must be odd and >= 3, got {m}")
    if m > min(h, w):
        raise ImageError(f"window size {m} exceeds image size {(h, w)}")


def _window_sums(padded: np.ndarray, m: int) -> np.ndarray:
    # summed-area table with a leading zero row/column
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1) + padded.shape[2:])
    np.cumsum(padded, axis=0, out=sat[1:, 1:])
    np.cumsum(sat[1:, 1:], axis=1, out=sat[1:, 1:])
    return sat[m:, m:] - sat[:-m, m:] - sat[m:, :-m] + sat[:-m, :-m]


def box_filter(img, m: int) -> np.ndarray:
    """Mean over the m x m window centred on each pixel.

    Borders use replicate padding and the divisor is always m*m. Accepts
    (H, W) or (H, W, C) arrays and returns the same shape.
    """
    a = np.asarray(img, dtype=np.float64)
    _check_window(m, a.shape[0], a.shape[1])
    r = m // 2
    pad = [(r, r), (r, r)] + [(0, 0)] * (a.ndim - 2)
    padded = np.pad(a, pad, mode="edge")
    return _window_sums(padded, m) / (m * m)


def box_filter_adjoint(grad, m: int) -> np.ndarray:
    """Transpose of :func:`box_filter` (replicate padding folded back)."""
    g = np.asarray(grad, dtype=np.float64)
    h, w = g.shape[:2]
    _check_window(m, h, w)
    r = m // 2
    pad = [(m - 1, m - 1), (m - 1, m - 1)] + [(0, 0)] * (g.ndim - 2)
    # full correlation: every padded position collects the windows covering it
    spread = _window_sums(np.pad(g, pad), m) / (m * m)
    out = spread[r:r + h, r:r + w].copy()
    out[0] += spread[:r, r:r + w].sum(axis=0)
    out[-1] += spread[r + h:, r:r + w].sum(axis=0)
    out[:, 0] += spread[r:r + h, :r].sum(axis=1)
    out[:, -1] += spread[r:r + h, r + w:].sum(axis=1)
    out[0, 0] += spread[:r, :r].sum(axis=(0, 1))
    out[0, -1] += spread[:r, r + w:].sum(axis=(0, 1))
    out[-1, 0] += spread[r + h:, :r].sum(axis=(0, 1))
    out[-1, -1] += spread[r + h:, r + w:].sum(axis=(0, 1))
    return out


def compose(img_a, img_b, mask_a, mask_b) -> np.ndarray:
    """Stitched image ``A * mask_a + B * mask_b``; masks may be soft."""
    a = as_image(img_a)
    b = as_image(img_b)
    if a.shape != b.shape:
        raise ImageError(f"image shapes differ: {a.shape} vs {b.shape}")
    ma = np.asarray(mask_a, dtype=np.float64)
    mb = np.asarray(mask_b, dtype=np.float64)
    if ma.shape != a.shape[:2] or mb.shape != a.shape[:2]:
        raise ImageError("mask shape does not match image")
    return a * ma[:, :, None] + b * mb[:, :, None]


def derive_valid_mask(img) -> np.ndarray:
    """Content footprint of a warped image: any channel >= 1/255, then 3x3 closing."""
    a = as_image(img)
    raw = (a >= TAU_VALID).any(axis=2)
    # edge padding keeps closing from eating pixels along the frame
    padded = np.pad(raw, 2, mode="edge")
    closed = ndimage.binary_closing(padded, structure=np.ones((3, 3), bool))
    return closed[2:-2, 2:-2]


@dataclass(frozen=True)
class MaskPair:
    mask_a: np.ndarray
    mask_b: np.ndarray

    def check(self, valid_a, valid_b) -> None:
        union = np.asarray(valid_a, bool) | np.asarray(valid_b, bool)
        if np.any(self.mask_a & self.mask_b):
            raise ValueError("masks overlap")
        if np.any((self.mask_a | self.mask_b) != union):
            raise ValueError("masks do not cover the valid union exactly")


@dataclass(frozen=True)
class RegionPartition:
    valid_a: np.ndarray
    valid_b: np.ndarray
    r11: np.ndarray
    r22: np.ndarray
    r12: np.ndarray
    q1: tuple[int, int] | None = None
    q2: tuple[int, int] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.r12.shape

    @property
    def n11(self) -> int:
        return int(self.r11.sum())

    @property
    def n22(self) -> int:
        return int(self.r22.sum())

    @property
    def n12(self) -> int:
        return int(self.r12.sum())

    @property
    def union(self) -> np.ndarray:
        return self.valid_a | self.valid_b

    def endpoints(self) -> tuple[tuple[int, int], tuple[int, int]]:
        if self.q1 is None or self.q2 is None:
            raise PartitionError("demarcation points are undefined for this partition")
        return self.q1, self.q2

    def transpose(self) -> "RegionPartition":
        def t(q):
            return None if q is None else (q[1], q[0])
        return RegionPartition(self.valid_a.T, self.valid_b.T, self.r11.T, self.r22.T,
                               self.r12.T, t(self.q1), t(self.q2))


def contour_vertices(mask) -> np.ndarray:
    """Lattice vertices (H+1, W+1) touched by the crack boundary of ``mask``.

    Pixels outside the frame count as unset.
    """
    m = np.pad(np.asarray(mask, bool), 1)
    quad = np.stack([m[:-1, :-1], m[:-1, 1:], m[1:, :-1], m[1:, 1:]])
    return quad.any(axis=0) & ~quad.all(axis=0)


def demarcation_points(valid_a, valid_b) -> tuple[tuple[int, int], tuple[int, int]]:
    """The two vertices where the contours of both valid masks meet.

    Runs of coincident contour (e.g. along the frame) shrink to the vertex
    nearest their centroid; of the remaining candidates the farthest-apart
    pair is returned, ordered lexicographically as (row, col).
    """
    both = contour_vertices(valid_a) & contour_vertices(valid_b)
    labels, n = ndimage.label(both, structure=np.ones((3, 3), bool))
    if n < 2:
        raise PartitionError(f"valid-mask contours meet in {n} place(s); need two")
    reps = []
    for k in range(1, n + 1):
        pts = np.argwhere(labels == k)
        c = pts.mean(axis=0)
        reps.append(tuple(int(v) for v in pts[np.argmin(((pts - c) ** 2).sum(axis=1))]))
    best, pair = -1.0, None
    for i in range(len(reps)):
        for j in range(i + 1, len(reps)):
            d = (reps[i][0] - reps[j][0]) ** 2 + (reps[i][1] - reps[j][1]) ** 2
            if d > best:
                best, pair = d, (reps[i], reps[j])
    q1, q2 = sorted(pair)
    return q1, q2


def region_partition(valid_a, valid_b, endpoints: bool = True) -> RegionPartition:
    va = np.asarray(valid_a, bool)
    vb = np.asarray(valid_b, bool)
    if va.shape != vb.shape:
        raise PartitionError("valid masks differ in shape")
    if not va.any() or not vb.any():
        raise PartitionError("a valid mask is empty")
    r12 = va & vb
    if not r12.any():
        raise PartitionError("images do not overlap")
    q1 = q2 = None
    if endpoints:
        q1, q2 = demarcation_points(va, vb)
    return RegionPartition(va, vb, va & ~vb, vb & ~va, r12, q1, q2)


def vertex_to_pixel(q: tuple[int, int], region) -> tuple[int, int]:
    """A pixel of ``region`` among the four touching lattice vertex ``q``."""
    h, w = region.shape
    y, x = q
    for py, px in ((y, x), (y, x - 1), (y - 1, x), (y - 1, x - 1)):
        if 0 <= py < h and 0 <= px < w and region[py, px]:
            return py, px
    raise PartitionError(f"vertex {q} does not touch the region")


def resize_image(img, shape: tuple[int, int]) -> np.ndarray:
    """Area/bilinear resample to ``shape`` (H, W)."""
    a = as_image(img)
    if a.shape[:2] == tuple(shape):
        return a.copy()
    h, w = shape
    planes = []
    for c in range(a.shape[2]):
        im = Image.fromarray(a[:, :, c].astype(np.float32), mode="F")
        planes.append(np.asarray(im.resize((w, h), Image.BILINEAR), dtype=np.float64))
    return np.stack(planes, axis=2)


def resize_mask(mask, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resample of a mask (bool or float) to ``shape``."""
    m = np.asarray(mask)
    h, w = shape
    if m.shape == (h, w):
        return m.copy()
    rows = np.minimum((np.arange(h) + 0.5) * m.shape[0] / h, m.shape[0] - 1).astype(int)
    cols = np.minimum((np.arange(w) + 0.5) * m.shape[1] / w, m.shape[1] - 1).astype(int)
    return m[np.ix_(rows, cols)]
