"""Direct per-pair mask optimisation under the selection consistency loss."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .imgcore import MaskPair, RegionPartition
from .loss import LossBreakdown, LossSpace, LossWeights, SelectionConsistencyLoss, prepare_loss_space

_FOUR = ndimage.generate_binary_structure(2, 1)


class OptimizationError(RuntimeError):
    pass


class Adam:
    """Adam over a list of arrays with an exponentially decaying step size.

    The step size at update ``t`` (0-based) is ``lr * decay ** (t / decay_every)``.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 decay=1.0, decay_every=1):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.decay, self.decay_every = decay, decay_every
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def rate(self, t=None) -> float:
        t = self.t if t is None else t
        return self.lr * self.decay ** (t / self.decay_every)

    def step(self, grads) -> None:
        lr = self.rate()
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-2
    decay: float = 0.999
    max_steps: int = 1500
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    init_scheme: str = "sweep"
    threshold: float = 0.5
    window: int = 50
    tol: float = 1e-5

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError("decay must lie in [0, 1]")


@dataclass
class OptimTrace:
    history: list[LossBreakdown] = field(default_factory=list)
    step_ms: list[float] = field(default_factory=list)

    @property
    def totals(self) -> np.ndarray:
        return np.array([h.total for h in self.history])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["step", "loss_non", "loss_patch", "total", "ms"])
            for i, (h, ms) in enumerate(zip(self.history, self.step_ms)):
                out.writerow([i, repr(h.loss_non), repr(h.loss_patch), repr(h.total), f"{ms:.3f}"])


def soft_from_logits(z: np.ndarray, part: RegionPartition) -> np.ndarray:
    s = np.where(part.r12, expit(z), 0.5)
    s[part.r11] = 1.0
    s[part.r22] = 0.0
    return s


def _a_side_sign(dist: np.ndarray, part: RegionPartition) -> float:
    score = dist[part.r11].sum() - dist[part.r22].sum()
    return 1.0 if score >= 0 else -1.0


def _line_distance(part: RegionPartition) -> np.ndarray:
    """Signed distance of pixel centres to the q1-q2 line, positive on the A side."""
    (y1, x1), (y2, x2) = part.endpoints()
    yy, xx = np.mgrid[0:part.shape[0], 0:part.shape[1]]
    cy, cx = yy + 0.5, xx + 0.5
    dy, dx = y2 - y1, x2 - x1
    dist = ((cx - x1) * dy - (cy - y1) * dx) / np.hypot(dy, dx)
    return _a_side_sign(dist, part) * dist


def _pin(z: np.ndarray, part: RegionPartition) -> np.ndarray:
    z = np.where(part.r12, z, 0.0)
    z[part.r11] = np.inf
    z[part.r22] = -np.inf
    return z


def init_soft_mask(part: RegionPartition, scheme: str = "bisector", width: float = 2.0,
                   loss: SelectionConsistencyLoss | None = None, step: float = 2.0) -> np.ndarray:
    """Initial logits; r11 pinned to +inf, r22 to -inf.

    ``half`` starts every overlap pixel at 0.5. ``bisector`` splits the
    overlap along the straight line through the demarcation points, with
    logits equal to the signed pixel distance divided by ``width``.
    ``sweep`` slides that line across the overlap in ``step``-pixel
    increments, scores each split with ``loss`` and keeps the centre of the
    longest run of lowest-loss splits.
    """
    if scheme == "half":
        return _pin(np.zeros(part.shape), part)
    if scheme not in ("bisector", "sweep"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    dist = _line_distance(part)
    if scheme == "bisector":
        return _pin(dist / width, part)
    if loss is None:
        raise ValueError("the sweep scheme needs a loss to score candidate splits")
    d12 = dist[part.r12]
    offsets = np.arange(np.floor(d12.min()), np.ceil(d12.max()) + step, step)
    scores = []
    for off in offsets:
        z = _pin((dist - off) / width, part)
        scores.append(loss(soft_from_logits(z, part)).total)
    scores = np.array(scores)
    if not np.all(np.isfinite(scores)):
        raise OptimizationError("non-finite loss while scoring initial splits")
    best = scores <= scores.min() + 1e-9 * (1.0 + abs(scores.min()))
    # longest run of best-scoring offsets; its middle element
    runs, start = [], None
    for i, flag in enumerate(np.append(best, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((i - start, -start, start, i - 1))
            start = None
    _, _, lo, hi = max(runs)
    return _pin((dist - offsets[(lo + hi) // 2]) / width, part)


def _keep_seeded(mask: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(mask, structure=_FOUR)
    if n <= 1:
        return mask.copy()
    hit = np.unique(labels[seeds & mask])
    hit = hit[hit > 0]
    if hit.size == 0:
        sizes = np.bincount(labels.ravel())[1:]
        hit = np.array([np.argmax(sizes) + 1])
    return np.isin(labels, hit)


def binarize_mask(soft, part: RegionPartition, threshold: float = 0.5) -> MaskPair:
    """Threshold (>=) and clean up so each side is one piece attached to its own region."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    s = np.asarray(soft, float)
    union = part.union
    mask_a = part.r11 | (part.r12 & (s >= threshold))
    mask_a = _keep_seeded(mask_a, part.r11)
    mask_b = union & ~mask_a
    mask_b = _keep_seeded(mask_b, part.r22)
    mask_a = union & ~mask_b
    return MaskPair(mask_a, mask_b)


def optimize_mask(img_a, img_b, part: RegionPartition, cfg: OptimConfig = OptimConfig(),
                  weights: LossWeights = LossWeights(), space=LossSpace.EDGE):
    """Fit overlap logits by Adam; return (MaskPair, OptimTrace, soft mask).

    The best iterate seen is binarised, so the reported mask never scores
    worse than the initialisation.
    """
    a, b = prepare_loss_space(img_a, img_b, space, part.valid_a, part.valid_b)
    loss = SelectionConsistencyLoss(a, b, part, weights)
    scheme = cfg.init_scheme if part.q1 is not None else "half"
    z_full = init_soft_mask(part, scheme, loss=loss)
    r12 = part.r12
    z = z_full[r12].copy()
    opt = Adam([z], lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps_adam, decay=cfg.decay)
    trace = OptimTrace()
    soft = soft_from_logits(z_full, part)
    best_total, best_soft = np.inf, soft
    for t in range(cfg.max_steps):
        t0 = time.perf_counter()
        z_full[r12] = z
        soft = soft_from_logits(z_full, part)
        br, g = loss.evaluate(soft)
        if not np.isfinite(br.total) or not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite loss at step {t}: {br}")
        if br.total < best_total:
            best_total, best_soft = br.total, soft
        s12 = soft[r12]
        opt.step([g[r12] * s12 * (1.0 - s12)])
        trace.history.append(br)
        trace.step_ms.append((time.perf_counter() - t0) * 1e3)
        if t >= cfg.window:
            old = trace.history[t - cfg.window].total
            if old - br.total < cfg.tol * max(abs(old), 1e-12):
                break
    return binarize_mask(best_soft, part, cfg.threshold), trace, best_soft
