"""Dynamic-programming seam finder (the speed baseline)."""
from __future__ import annotations

import numpy as np

from .imgcore import MaskPair, PartitionError, RegionPartition, vertex_to_pixel


class SeamError(RuntimeError):
    pass


def cost_map(img_a, img_b, part: RegionPartition) -> np.ndarray:
    """Channel-summed absolute difference on the overlap, +inf elsewhere.

    Images are expected already converted to the working loss space.
    """
    if part.n12 == 0:
        raise PartitionError("empty overlap")
    diff = np.abs(np.asarray(img_a, float) - np.asarray(img_b, float))
    if diff.ndim == 3:
        diff = diff.sum(axis=2)
    return np.where(part.r12, diff, np.inf)


def dp_path(cost: np.ndarray, start: tuple[int, int], end: tuple[int, int]):
    """Cheapest row-monotone 8-connected path from ``start`` to ``end``.

    One pixel per row between the two endpoint rows, column step in
    {-1, 0, +1}. Ties prefer step 0, then -1. Returns (cols, total) where
    ``cols[k]`` is the column at row ``start[0] + k``; raises SeamError if
    every path crosses an infinite cell.
    """
    (y0, x0), (y1, x1) = start, end
    if y1 < y0:
        cols, total = dp_path(cost, end, start)
        return cols[::-1].copy(), total
    h, w = cost.shape
    n = y1 - y0 + 1
    acc = np.full(w, np.inf)
    acc[x0] = cost[y0, x0]
    back = np.zeros((n, w), dtype=np.int8)
    inf_col = np.array([np.inf])
    for k in range(1, n):
        # predecessor for step 0, step -1 (came from x+1), step +1 (came from x-1)
        cand = np.stack([acc,
                         np.concatenate([acc[1:], inf_col]),
                         np.concatenate([inf_col, acc[:-1]])])
        choice = np.argmin(cand, axis=0)
        best = cand[choice, np.arange(w)]
        back[k] = choice
        acc = best + cost[y0 + k]
    total = acc[x1]
    if not np.isfinite(total):
        raise SeamError("no monotone path through the overlap")
    cols = np.empty(n, dtype=int)
    cols[-1] = x1
    offset = np.array([0, 1, -1])
    for k in range(n - 1, 0, -1):
        cols[k - 1] = cols[k] + offset[back[k, cols[k]]]
    return cols, float(total)


def _span_clamped(cost: np.ndarray, r12: np.ndarray) -> np.ndarray:
    # admit every cell inside each row's overlap span, holes at a high price
    out = cost.copy()
    finite = np.isfinite(cost)
    penalty = 1.0 + 10.0 * (cost[finite].max() if finite.any() else 1.0) * cost.shape[0]
    for y in range(cost.shape[0]):
        xs = np.flatnonzero(r12[y])
        if xs.size:
            seg = out[y, xs[0]:xs[-1] + 1]
            seg[~np.isfinite(seg)] = penalty
    return out


def dp_seam(cost: np.ndarray, part: RegionPartition, return_path: bool = False):
    """Seam masks from the cheapest monotone path between the demarcation points.

    The scan runs along the axis with the larger endpoint displacement.
    Overlap pixels left of (or above) the path are labelled A, the rest B;
    the labelling is mirrored when that would put A on the r22 side.
    """
    q1, q2 = part.endpoints()
    p1 = vertex_to_pixel(q1, part.r12)
    p2 = vertex_to_pixel(q2, part.r12)
    transposed = abs(p2[1] - p1[1]) > abs(p2[0] - p1[0])
    if transposed:
        cost, part = cost.T, part.transpose()
        p1, p2 = (p1[1], p1[0]), (p2[1], p2[0])
    try:
        cols, total = dp_path(cost, p1, p2)
    except SeamError:
        cols, total = dp_path(_span_clamped(cost, part.r12), p1, p2)

    h, w = cost.shape
    ya, yb = sorted((p1[0], p2[0]))
    if p1[0] > p2[0]:
        cols = cols[::-1]
    line = np.empty(h, dtype=int)
    line[ya:yb + 1] = cols
    line[:ya] = cols[0]
    line[yb + 1:] = cols[-1]
    left = np.arange(w)[None, :] < line[:, None]
    if _prefers_mirror(left, part):
        left = np.arange(w)[None, :] > line[:, None]
    mask_a = part.r11 | (part.r12 & left)
    mask_b = part.union & ~mask_a
    if transposed:
        mask_a, mask_b = mask_a.T, mask_b.T
        path = [(int(c), ya + k) for k, c in enumerate(cols)]
    else:
        path = [(ya + k, int(c)) for k, c in enumerate(cols)]
    masks = MaskPair(mask_a, mask_b)
    if return_path:
        return masks, path, total
    return masks


def _touching(region: np.ndarray, target: np.ndarray) -> int:
    grown = np.zeros_like(target)
    grown[1:] |= target[:-1]
    grown[:-1] |= target[1:]
    grown[:, 1:] |= target[:, :-1]
    grown[:, :-1] |= target[:, 1:]
    return int((region & grown).sum())


def _prefers_mirror(left: np.ndarray, part: RegionPartition) -> bool:
    side = part.r12 & left
    other = part.r12 & ~left
    keep = _touching(side, part.r11) + _touching(other, part.r22)
    flip = _touching(side, part.r22) + _touching(other, part.r11)
    return flip > keep
