"""Image-pair corpora: synthetic suites and on-disk directories.

A corpus directory holds ``NNN_A.png`` / ``NNN_B.png`` pairs with optional
``NNN_A_mask.png`` / ``NNN_B_mask.png`` valid masks (derived from the image
content when absent) and an optional ``NNN_misalign.png`` ground-truth map.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgcore import derive_valid_mask, load_image, load_mask, save_image, save_mask
from .synth import SyntheticPairSpec, gen_synthetic_pair, suite_specs

_PAIR_RE = re.compile(r"^(?P<id>.+)_A\.png$")


@dataclass
class Pair:
    pair_id: str
    img_a: np.ndarray
    img_b: np.ndarray
    valid_a: np.ndarray
    valid_b: np.ndarray
    misalignment: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid_a.shape


def synthetic_corpus(specs: list[SyntheticPairSpec]) -> list[Pair]:
    out = []
    for i, spec in enumerate(specs):
        p = gen_synthetic_pair(spec)
        out.append(Pair(f"{i:03d}", p.img_a, p.img_b, p.valid_a, p.valid_b, p.misalignment))
    return out


def suite_corpus(n: int = 20, seed: int = 0, size: int = 128, **kw) -> list[Pair]:
    return synthetic_corpus(suite_specs(n, seed=seed, size=size, **kw))


def write_corpus(pairs: list[Pair], root, specs: list[SyntheticPairSpec] | None = None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for p in pairs:
        save_image(p.img_a, root / f"{p.pair_id}_A.png")
        save_image(p.img_b, root / f"{p.pair_id}_B.png")
        save_mask(p.valid_a, root / f"{p.pair_id}_A_mask.png")
        save_mask(p.valid_b, root / f"{p.pair_id}_B_mask.png")
        if p.misalignment is not None:
            save_mask(p.misalignment, root / f"{p.pair_id}_misalign.png")
    if specs is not None:
        with open(root / "specs.json", "w") as fh:
            json.dump([s.to_dict() for s in specs], fh, indent=1, sort_keys=True)


def load_pair(root, pair_id: str) -> Pair:
    root = Path(root)
    a = load_image(root / f"{pair_id}_A.png")
    b = load_image(root / f"{pair_id}_B.png")
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"pair {pair_id}: image sizes differ {a.shape[:2]} vs {b.shape[:2]}")
    ma, mb = root / f"{pair_id}_A_mask.png", root / f"{pair_id}_B_mask.png"
    va = load_mask(ma) if ma.exists() else derive_valid_mask(a)
    vb = load_mask(mb) if mb.exists() else derive_valid_mask(b)
    mis = root / f"{pair_id}_misalign.png"
    return Pair(pair_id, a, b, va, vb, load_mask(mis) if mis.exists() else None)


def load_corpus(root) -> list[Pair]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory {root} does not exist")
    ids = sorted(m.group("id") for f in root.iterdir() if (m := _PAIR_RE.match(f.name)))
    if not ids:
        raise ValueError(f"no *_A.png images in {root}")
    return [load_pair(root, i) for i in ids]
