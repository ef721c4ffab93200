"""Synthetic stitching pairs with a controlled parallax band."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

TEXTURES = ("blobs", "checker", "gradient")


@dataclass(frozen=True)
class SyntheticPairSpec:
    """Two horizontally overlapping crops of one rendered scene.

    ``overlap`` is the fraction of each crop shared with the other. Inside a
    band of the overlap (columns for ``axis='vertical'``, rows for
    ``'horizontal'``) image B sees the scene shifted right by ``offset``
    pixels. ``band_center`` is the band's position as a fraction across the
    overlap (or down the canvas for horizontal bands). ``gain`` and ``bias``
    apply an exposure change to B's content: ``gain * v + bias``.
    """
    seed: int = 0
    height: int = 128
    width: int = 128
    overlap: float = 0.5
    texture: str = "blobs"
    axis: str = "vertical"
    offset: int = 6
    band_width: int = 16
    band_center: float = 0.5
    noise: float = 0.0
    gain: float = 1.0
    bias: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.overlap < 1.0:
            raise ValueError("overlap fraction must lie in (0, 1)")
        if self.offset < 0:
            raise ValueError("offset must be nonnegative")
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}")
        if self.axis not in ("vertical", "horizontal"):
            raise ValueError(f"unknown band axis {self.axis!r}")
        if self.gain <= 0:
            raise ValueError("gain must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticPair:
    img_a: np.ndarray
    img_b: np.ndarray
    valid_a: np.ndarray
    valid_b: np.ndarray
    misalignment: np.ndarray
    band: np.ndarray
    spec: SyntheticPairSpec


def crop_layout(spec: SyntheticPairSpec) -> tuple[int, int]:
    """(crop width, overlap width) for the canvas."""
    crop = int(round(spec.width / (2.0 - spec.overlap)))
    return crop, 2 * crop - spec.width


def render_texture(kind: str, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """RGB scene with values kept inside [0.1, 0.9]."""
    if kind == "blobs":
        planes = []
        for sigma in (2.0, 3.0, 4.5):
            f = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma, mode="wrap")
            planes.append(f / (np.abs(f).max() + 1e-12))
        base = np.stack(planes, axis=2)
        mix = rng.uniform(0.2, 1.0, size=(3, 3))
        img = base @ (mix / mix.sum(axis=0, keepdims=True))
    elif kind == "checker":
        cell = int(rng.integers(4, 9))
        yy, xx = np.mgrid[0:height, 0:width]
        board = ((yy // cell + xx // cell) % 2).astype(float)
        colors = rng.uniform(0.0, 1.0, size=(2, 3))
        img = colors[0] * (1 - board[..., None]) + colors[1] * board[..., None]
        img = ndimage.gaussian_filter(img, (0.7, 0.7, 0), mode="nearest")
        img = 2.0 * img - 1.0
    else:
        yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
        freq = rng.uniform(3.0, 7.0, size=3)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        img = np.stack([np.sin(2 * np.pi * f * (0.7 * xx + 0.3 * yy) + p) * 0.6 + (xx - 0.5)
                        for f, p in zip(freq, phase)], axis=2)
    lo, hi = img.min(), img.max()
    return 0.1 + 0.8 * (img - lo) / (hi - lo + 1e-12)


def gen_synthetic_pair(spec: SyntheticPairSpec) -> SyntheticPair:
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    crop, ow = crop_layout(spec)
    if ow < 1:
        raise ValueError("crops do not overlap")
    b_start = w - crop
    span = h if spec.axis == "horizontal" else ow
    if spec.band_width > span:
        raise ValueError(f"band width {spec.band_width} exceeds overlap extent {span}")

    scene = render_texture(spec.texture, h, w + spec.offset, rng)
    valid_a = np.zeros((h, w), bool)
    valid_a[:, :crop] = True
    valid_b = np.zeros((h, w), bool)
    valid_b[:, b_start:] = True
    overlap = valid_a & valid_b

    band = np.zeros((h, w), bool)
    start = int(round(spec.band_center * span - spec.band_width / 2.0))
    start = min(max(start, 0), span - spec.band_width)
    if spec.axis == "vertical":
        band[:, b_start + start:b_start + start + spec.band_width] = True
    else:
        band[start:start + spec.band_width, b_start:crop] = True
    band &= overlap

    clean_a = np.where(valid_a[..., None], scene[:, :w], 0.0)
    view_b = scene[:, :w].copy()
    shifted = scene[:, spec.offset:spec.offset + w]
    view_b[band] = shifted[band]
    clean_b = np.where(valid_b[..., None], view_b, 0.0)
    misalignment = overlap & (np.abs(clean_a - clean_b).sum(axis=2) > 1e-9)

    img_a, img_b = clean_a, clean_b
    if spec.gain != 1.0 or spec.bias != 0.0:
        img_b = np.where(valid_b[..., None], np.clip(spec.gain * img_b + spec.bias, 0.02, 1.0), 0.0)
    if spec.noise > 0:
        img_a = np.clip(img_a + spec.noise * rng.standard_normal(img_a.shape), 0.02, 1.0)
        img_b = np.clip(img_b + spec.noise * rng.standard_normal(img_b.shape), 0.02, 1.0)
        img_a = np.where(valid_a[..., None], img_a, 0.0)
        img_b = np.where(valid_b[..., None], img_b, 0.0)
    return SyntheticPair(img_a, img_b, valid_a, valid_b, misalignment, band, spec)


def suite_specs(n: int = 20, seed: int = 0, size: int = 128, noise: float = 0.01,
                offsets=(4, 8), exposure: float = 0.1) -> list[SyntheticPairSpec]:
    """Seeded benchmark suite: vertical parallax bands of 4-8 px near the overlap middle.

    Each pair gets Gaussian noise of std ``noise`` and an exposure change of
    B with gain in ``1 +- exposure`` and bias in ``+- exposure / 2``.
    """
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n):
        gain, bias = rng.uniform(-1.0, 1.0, size=2) * exposure * np.array([1.0, 0.5])
        specs.append(SyntheticPairSpec(
            seed=int(rng.integers(0, 2**31 - 1)),
            height=size, width=size,
            overlap=0.5,
            texture=TEXTURES[i % 2],
            axis="vertical",
            offset=int(rng.integers(offsets[0], offsets[1] + 1)),
            band_width=int(rng.integers(size // 10, size // 7 + 1)),
            band_center=float(rng.uniform(0.4, 0.6)),
            noise=noise,
            gain=float(1.0 + gain),
            bias=float(bias),
        ))
    return specs
