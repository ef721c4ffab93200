"""Seam extraction and the ZNCC-based seam quality score."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgcore import MaskPair, RegionPartition, to_gray

SWEEP_SIZES = tuple(range(2, 16))
_FLAT_TOL = 1e-12


class SeamTraceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Seam:
    pixels: tuple[tuple[int, int], ...]
    start_vertex: tuple[int, int]
    end_vertex: tuple[int, int]

    def __len__(self) -> int:
        return len(self.pixels)

    def as_array(self) -> np.ndarray:
        return np.array(self.pixels, dtype=int).reshape(-1, 2)


def _left(d):
    return (-d[1], d[0])


def _right(d):
    return (d[1], -d[0])


def _oriented_cracks(label_a, label_b, r12):
    """Crack edges between A and B pixels, directed so that A lies on the left.

    Returns {start_vertex: [(direction, end_vertex, emitted_pixel), ...]}.
    """
    h, w = r12.shape
    out: dict[tuple[int, int], list] = {}

    def emit(pa, pb):
        return pa if r12[pa] else pb

    # horizontal neighbours -> vertical cracks on column x+1
    ys, xs = np.nonzero((label_a[:, :-1] & label_b[:, 1:]) | (label_b[:, :-1] & label_a[:, 1:]))
    for y, x in zip(ys.tolist(), xs.tolist()):
        p, q = (y, x), (y, x + 1)
        if not (r12[p] or r12[q]):
            continue
        if label_a[p]:   # A on the west: travel north
            v0, v1, d, px = (y + 1, x + 1), (y, x + 1), (-1, 0), emit(p, q)
        else:            # A on the east: travel south
            v0, v1, d, px = (y, x + 1), (y + 1, x + 1), (1, 0), emit(q, p)
        out.setdefault(v0, []).append((d, v1, px))
    # vertical neighbours -> horizontal cracks on row y+1
    ys, xs = np.nonzero((label_a[:-1] & label_b[1:]) | (label_b[:-1] & label_a[1:]))
    for y, x in zip(ys.tolist(), xs.tolist()):
        p, q = (y, x), (y + 1, x)
        if not (r12[p] or r12[q]):
            continue
        if label_a[p]:   # A to the north: travel east
            v0, v1, d, px = (y + 1, x), (y + 1, x + 1), (0, 1), emit(p, q)
        else:            # A to the south: travel west
            v0, v1, d, px = (y + 1, x + 1), (y + 1, x), (0, -1), emit(q, p)
        out.setdefault(v0, []).append((d, v1, px))
    return out


def _trace_curves(cracks):
    indeg: dict = {}
    for v0, arcs in cracks.items():
        for _, v1, _ in arcs:
            indeg[v1] = indeg.get(v1, 0) + 1
    remaining = {v: list(a) for v, a in cracks.items()}
    starts = sorted(v for v, a in cracks.items() if len(a) > indeg.get(v, 0))
    curves = []

    def walk(v, d_in):
        verts, pix = [v], []
        while remaining.get(v):
            arcs = remaining[v]
            if d_in is None or len(arcs) == 1:
                k = 0
            else:
                order = [_left(d_in), d_in, _right(d_in)]
                k = min(range(len(arcs)),
                        key=lambda i: order.index(arcs[i][0]) if arcs[i][0] in order else 3)
            d_in, v, px = arcs.pop(k)
            verts.append(v)
            pix.append(px)
        return verts, pix

    for s in starts:
        while remaining.get(s):
            curves.append(walk(s, None))
    for v in sorted(remaining):
        while remaining.get(v):
            curves.append(walk(v, None))
    return curves


def extract_seam(masks: MaskPair, part: RegionPartition, strict: bool = True) -> Seam:
    """Pixels along the A/B boundary inside the overlap, ordered from q1 to q2.

    Each crack edge contributes its A-side pixel (or its B-side pixel when
    the A pixel lies outside the overlap). With ``strict`` a boundary made
    of several curves is an error; otherwise the longest one is used.
    """
    label_a = np.asarray(masks.mask_a, bool)
    label_b = np.asarray(masks.mask_b, bool)
    curves = _trace_curves(_oriented_cracks(label_a, label_b, part.r12))
    if not curves:
        raise SeamTraceError("masks share no boundary inside the overlap")
    if len(curves) > 1 and strict:
        raise SeamTraceError(f"mask boundary splits into {len(curves)} curves")
    verts, pix = max(curves, key=lambda c: len(c[1]))
    if part.q1 is not None and part.q2 is not None:
        def dist(v, q):
            return (v[0] - q[0]) ** 2 + (v[1] - q[1]) ** 2
        d_fwd = dist(verts[0], part.q1) + dist(verts[-1], part.q2)
        d_rev = dist(verts[-1], part.q1) + dist(verts[0], part.q2)
        if d_rev < d_fwd:
            verts, pix = verts[::-1], pix[::-1]
    seam = []
    for p in pix:
        if not seam or seam[-1] != p:
            seam.append(p)
    return Seam(tuple(seam), verts[0], verts[-1])


def zncc(patch_a, patch_b) -> float:
    """Zero-mean normalised cross-correlation with population deviations.

    Flat patches: both flat -> 1 if the means agree else -1; one flat -> 0.
    """
    a = np.asarray(patch_a, float).ravel()
    b = np.asarray(patch_b, float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"patch shapes differ: {np.shape(patch_a)} vs {np.shape(patch_b)}")
    ma, mb = a.mean(), b.mean()
    ca, cb = a - ma, b - mb
    sa = math.sqrt(float(np.dot(ca, ca)) / a.size)
    sb = math.sqrt(float(np.dot(cb, cb)) / b.size)
    flat_a = sa <= _FLAT_TOL * max(1.0, abs(ma))
    flat_b = sb <= _FLAT_TOL * max(1.0, abs(mb))
    if flat_a and flat_b:
        return 1.0 if math.isclose(ma, mb, rel_tol=0.0, abs_tol=1e-12) else -1.0
    if flat_a or flat_b:
        return 0.0
    r = float(np.dot(ca, cb)) / (a.size * sa * sb)
    return min(1.0, max(-1.0, r))


def patch_window(center: tuple[int, int], n: int, shape: tuple[int, int]):
    """Row/column slices of the n x n window on ``center``, clipped to the image.

    For even n the centre sits at offset ceil(n/2) - 1.
    """
    off = math.ceil(n / 2) - 1
    y0, x0 = center[0] - off, center[1] - off
    return (slice(max(y0, 0), min(y0 + n, shape[0])),
            slice(max(x0, 0), min(x0 + n, shape[1])))


def seam_quality(img_a, img_b, seam, n: int = 15, region=None) -> float:
    """Mean of ``1 - (ZNCC + 1) / 2`` over patches centred on the seam pixels.

    ``region`` optionally restricts patches to a pixel subset (e.g. the
    overlap) in addition to the image bounds.
    """
    pixels = seam.pixels if isinstance(seam, Seam) else [tuple(p) for p in seam]
    if not pixels:
        raise ValueError("empty seam")
    if n < 2:
        raise ValueError("patch size must be >= 2")
    ga, gb = to_gray(img_a), to_gray(img_b)
    if ga.shape != gb.shape:
        raise ValueError("image shapes differ")
    if n > min(ga.shape):
        raise ValueError(f"patch size {n} exceeds image size {ga.shape}")
    reg = None if region is None else np.asarray(region, bool)
    acc = 0.0
    for p in pixels:
        sl = patch_window(p, n, ga.shape)
        pa, pb = ga[sl], gb[sl]
        if reg is not None:
            keep = reg[sl]
            pa, pb = pa[keep], pb[keep]
        acc += 1.0 - (zncc(pa, pb) + 1.0) / 2.0
    return acc / len(pixels)


def quality_sweep(img_a, img_b, seam, sizes=SWEEP_SIZES, region=None) -> list[tuple[int, float]]:
    return [(n, seam_quality(img_a, img_b, seam, n, region)) for n in sizes]
