"""Selection consistency loss over a soft mask, with its exact gradient.

For a soft mask ``s`` (the weight of image A) the stitched image is

    C = A * s * validA + B * (1 - s) * validB

and the training objective is ``w1 * loss_non + w2 * loss_patch``, where
``loss_non`` pins the non-overlapping regions to their own source and
``loss_patch`` measures, on box-filtered images, how far each overlap
pixel of C is from the nearer of the two sources.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .imgcore import (ImageError, PartitionError, RegionPartition, as_image, box_filter,
                      box_filter_adjoint, fill_invalid, rgb_to_gray, sobel_edges)

EDGE_SCALE = 1.0 / (4.0 * math.sqrt(2.0))


class LossSpace(str, Enum):
    RGB = "rgb"
    GRAY = "gray"
    EDGE = "edge"


@dataclass(frozen=True)
class LossWeights:
    w1: float = 200.0
    w2: float = 100.0
    m: int = 9

    def __post_init__(self):
        if self.w1 <= 0 or self.w2 <= 0:
            raise ValueError("loss weights must be positive")
        if self.m < 3 or self.m % 2 == 0:
            raise ValueError(f"box size must be odd and >= 3, got {self.m}")


@dataclass(frozen=True)
class LossBreakdown:
    loss_non: float
    loss_pixel: float
    loss_patch: float
    total: float
    w1: float
    w2: float
    m: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LossBreakdown":
        return cls(**json.loads(text))


def prepare_loss_space(img_a, img_b, space, valid_a=None, valid_b=None) -> tuple[np.ndarray, np.ndarray]:
    """Images in the requested loss space.

    For the edge space, passing the valid masks extends each image's content
    into its invalid area before the Sobel filter and zeroes the result
    there afterwards, so the boundary of the valid area does not register as
    an edge.
    """
    space = LossSpace(space)
    a, b = as_image(img_a), as_image(img_b)
    if a.shape[2] != 3 or b.shape[2] != 3:
        raise ImageError("loss-space preparation expects RGB inputs")
    if space is LossSpace.RGB:
        return a, b
    ga, gb = rgb_to_gray(a), rgb_to_gray(b)
    if space is LossSpace.GRAY:
        return ga, gb
    out = []
    for g, valid in ((ga, valid_a), (gb, valid_b)):
        if valid is None:
            out.append(sobel_edges(g) * EDGE_SCALE)
        else:
            valid = np.asarray(valid, bool)
            out.append(sobel_edges(fill_invalid(g, valid)) * EDGE_SCALE * valid[..., None])
    return out[0], out[1]


def _l1(x: np.ndarray) -> np.ndarray:
    return np.abs(x).sum(axis=2)


def loss_non(img_c, img_a, img_b, part: RegionPartition) -> float:
    c, a, b = as_image(img_c), as_image(img_a), as_image(img_b)
    total = 0.0
    for region, src, name in ((part.r11, a, "r11"), (part.r22, b, "r22")):
        n = int(region.sum())
        if n == 0:
            warnings.warn(f"{name} is empty; its loss_non term is zero", RuntimeWarning)
            continue
        total += _l1(c - src)[region].sum() / n
    return float(total)


def _selection_term(c, a, b, region) -> float:
    n = int(region.sum())
    if n == 0:
        raise PartitionError("empty overlap")
    da = _l1(c - a)[region]
    db = _l1(c - b)[region]
    return float(np.minimum(da, db).sum() / n)


def loss_pixel(img_c, img_a, img_b, part: RegionPartition) -> float:
    return _selection_term(as_image(img_c), as_image(img_a), as_image(img_b), part.r12)


def selection_map(img_c, img_a, img_b, m: int | None = None) -> np.ndarray:
    """Per-pixel ``min(|C - A|, |C - B|)``, on m x m box-filtered images when ``m`` is given."""
    c, a, b = as_image(img_c), as_image(img_a), as_image(img_b)
    if m is not None:
        c, a, b = box_filter(c, m), box_filter(a, m), box_filter(b, m)
    return np.minimum(_l1(c - a), _l1(c - b))


def loss_patch(img_c, img_a, img_b, part: RegionPartition, m: int) -> float:
    c, a, b = as_image(img_c), as_image(img_a), as_image(img_b)
    return _selection_term(box_filter(c, m), box_filter(a, m), box_filter(b, m), part.r12)


def soft_compose(img_a, img_b, soft_a, part: RegionPartition) -> np.ndarray:
    s = np.asarray(soft_a, float)
    ma = s * part.valid_a
    mb = (1.0 - s) * part.valid_b
    return img_a * ma[:, :, None] + img_b * mb[:, :, None]


class SelectionConsistencyLoss:
    """Loss and gradient for one image pair, with the filtered sources cached."""

    def __init__(self, img_a, img_b, part: RegionPartition, weights: LossWeights = LossWeights()):
        self.a = as_image(img_a)
        self.b = as_image(img_b)
        if self.a.shape != self.b.shape:
            raise ImageError(f"image shapes differ: {self.a.shape} vs {self.b.shape}")
        if self.a.shape[:2] != part.shape:
            raise ImageError("partition shape does not match the images")
        if part.n12 == 0:
            raise PartitionError("empty overlap")
        self.part = part
        self.w = weights
        self.ap = box_filter(self.a, weights.m)
        self.bp = box_filter(self.b, weights.m)
        # dC/ds, per channel
        self.dc_ds = (self.a * part.valid_a[:, :, None]) - (self.b * part.valid_b[:, :, None])
        self.n11, self.n22, self.n12 = part.n11, part.n22, part.n12
        for name, n in (("r11", self.n11), ("r22", self.n22)):
            if n == 0:
                warnings.warn(f"{name} is empty; its loss_non term is zero", RuntimeWarning)

    def compose(self, soft_a) -> np.ndarray:
        return soft_compose(self.a, self.b, soft_a, self.part)

    def __call__(self, soft_a) -> LossBreakdown:
        return self.evaluate(soft_a, gradient=False)[0]

    def evaluate(self, soft_a, gradient: bool = True):
        """Return (LossBreakdown, d total / d soft_a or None)."""
        part, w = self.part, self.w
        c = self.compose(soft_a)
        diff_a = c - self.a
        diff_b = c - self.b

        non = 0.0
        if self.n11:
            non += _l1(diff_a)[part.r11].sum() / self.n11
        if self.n22:
            non += _l1(diff_b)[part.r22].sum() / self.n22

        pix = float(np.minimum(_l1(diff_a), _l1(diff_b))[part.r12].sum() / self.n12)

        cp = box_filter(c, w.m)
        pdiff_a = cp - self.ap
        pdiff_b = cp - self.bp
        pa, pb = _l1(pdiff_a), _l1(pdiff_b)
        patch = float(np.minimum(pa, pb)[part.r12].sum() / self.n12)

        total = w.w1 * non + w.w2 * patch
        out = LossBreakdown(float(non), pix, patch, float(total), w.w1, w.w2, w.m)
        if not gradient:
            return out, None

        g_c = np.zeros_like(c)
        if self.n11:
            g_c += np.sign(diff_a) * (part.r11[:, :, None] * (w.w1 / self.n11))
        if self.n22:
            g_c += np.sign(diff_b) * (part.r22[:, :, None] * (w.w1 / self.n22))
        # ties go to the A branch
        take_a = (pa <= pb)[:, :, None]
        g_cp = np.where(take_a, np.sign(pdiff_a), np.sign(pdiff_b))
        g_cp *= part.r12[:, :, None] * (w.w2 / self.n12)
        g_c += box_filter_adjoint(g_cp, w.m)
        grad = (g_c * self.dc_ds).sum(axis=2)
        return out, grad


def total_loss(img_a, img_b, soft_a, part: RegionPartition,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    return SelectionConsistencyLoss(img_a, img_b, part, weights)(soft_a)


def loss_gradient(img_a, img_b, soft_a, part: RegionPartition,
                  weights: LossWeights = LossWeights()) -> np.ndarray:
    return SelectionConsistencyLoss(img_a, img_b, part, weights).evaluate(soft_a)[1]
