"""Benchmark harness: timing and seam quality for every (method, pair) cell."""
from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Pair
from .dp import cost_map, dp_seam
from .graphcut import gc_seam
from .imgcore import MaskPair, RegionPartition, compose, region_partition, resize_image, resize_mask, save_image, save_mask
from .loss import LossBreakdown, LossSpace, LossWeights, SelectionConsistencyLoss, prepare_loss_space
from .metrics import SWEEP_SIZES, Seam, extract_seam, quality_sweep
from .net import NetWeights, predict
from .optimizer import OptimConfig, binarize_mask, optimize_mask

METHODS = ("dp", "gc", "dseam-opt", "dseam-net")
SEAM_COLOR = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class BenchConfig:
    methods: tuple[str, ...] = METHODS
    space: LossSpace = LossSpace.EDGE
    baseline_space: LossSpace = LossSpace.RGB
    weights: LossWeights = LossWeights()
    optim: OptimConfig = OptimConfig()
    work_size: int | None = None
    sizes: tuple[int, ...] = SWEEP_SIZES

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        object.__setattr__(self, "space", LossSpace(self.space))
        object.__setattr__(self, "baseline_space", LossSpace(self.baseline_space))


@dataclass
class Cell:
    method: str
    pair_id: str
    time_s: float = math.nan
    quality: list[tuple[int, float]] = field(default_factory=list)
    loss: LossBreakdown | None = None
    error: str | None = None
    masks: MaskPair | None = None
    seam: Seam | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def q(self, n: int) -> float:
        return dict(self.quality)[n]


@dataclass
class MethodSummary:
    method: str
    n_pairs: int
    n_failed: int
    mean_time_s: float
    median_time_s: float
    warm_mean_time_s: float
    fps: float
    mean_q: dict[int, float]


@dataclass
class BenchReport:
    cells: list[Cell]
    methods: tuple[str, ...]
    pair_ids: list[str]
    sizes: tuple[int, ...] = SWEEP_SIZES

    def cell(self, method: str, pair_id: str) -> Cell:
        for c in self.cells:
            if c.method == method and c.pair_id == pair_id:
                return c
        raise KeyError((method, pair_id))

    def by_method(self, method: str) -> list[Cell]:
        return [c for c in self.cells if c.method == method]

    def summary(self) -> list[MethodSummary]:
        return [summarize(self.by_method(m), m, self.sizes) for m in self.methods]


def summarize(cells: list[Cell], method: str, sizes=SWEEP_SIZES) -> MethodSummary:
    """Aggregates over successful cells; the warm mean drops the first pair."""
    ok = [c for c in cells if c.ok]
    times = [c.time_s for c in ok]
    total = math.fsum(times)
    mean_q = {n: (math.fsum(c.q(n) for c in ok) / len(ok) if ok else math.nan) for n in sizes}
    return MethodSummary(
        method=method,
        n_pairs=len(cells),
        n_failed=len(cells) - len(ok),
        mean_time_s=total / len(times) if times else math.nan,
        median_time_s=statistics.median(times) if times else math.nan,
        warm_mean_time_s=math.fsum(times[1:]) / (len(times) - 1) if len(times) > 1 else math.nan,
        fps=len(times) / total if total > 0 else math.nan,
        mean_q=mean_q,
    )


def _work(pair: Pair, size: int | None):
    """Pair images and valid masks at the working resolution."""
    if size is None or pair.shape == (size, size):
        return pair.img_a, pair.img_b, pair.valid_a, pair.valid_b
    shape = (size, size)
    va, vb = resize_mask(pair.valid_a, shape), resize_mask(pair.valid_b, shape)
    return resize_image(pair.img_a, shape) * va[..., None], resize_image(pair.img_b, shape) * vb[..., None], va, vb


def run_method(method: str, pair: Pair, part: RegionPartition, cfg: BenchConfig,
               net: NetWeights | None = None) -> MaskPair:
    """Masks at native resolution. All preprocessing happens in here, so it is timed."""
    if method == "dp":
        a, b = prepare_loss_space(pair.img_a, pair.img_b, cfg.baseline_space, part.valid_a, part.valid_b)
        return dp_seam(cost_map(a, b, part), part)
    if method == "gc":
        a, b = prepare_loss_space(pair.img_a, pair.img_b, cfg.baseline_space, part.valid_a, part.valid_b)
        return gc_seam(a, b, part)
    if method == "dseam-opt":
        a, b, va, vb = _work(pair, cfg.work_size)
        if va is pair.valid_a:
            masks, _, _ = optimize_mask(a, b, part, cfg.optim, cfg.weights, cfg.space)
            return masks
        small = region_partition(va, vb)
        masks, _, soft = optimize_mask(a, b, small, cfg.optim, cfg.weights, cfg.space)
        return binarize_mask(resize_mask(soft, part.shape), part, cfg.optim.threshold)
    if method == "dseam-net":
        if net is None:
            raise ValueError("dseam-net needs a weights file")
        return predict(net, pair.img_a, pair.img_b, part)
    raise ValueError(f"unknown method {method!r}")


def run_benchmark(corpus: list[Pair], cfg: BenchConfig = BenchConfig(), net: NetWeights | None = None,
                  progress=None) -> BenchReport:
    """Serial timing and quality evaluation. Failures are recorded per cell.

    Region partitioning (valid-mask geometry shared by every method) is done
    once per pair outside the timed section, like file I/O.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if "dseam-net" in cfg.methods and net is None:
        raise ValueError("dseam-net needs a weights file")
    cells = []
    for pair in corpus:
        try:
            part = region_partition(pair.valid_a, pair.valid_b)
        except Exception as exc:  # noqa: BLE001 - recorded, run continues
            cells.extend(Cell(m, pair.pair_id, error=f"partition: {exc}") for m in cfg.methods)
            continue
        la, lb = prepare_loss_space(pair.img_a, pair.img_b, cfg.space, part.valid_a, part.valid_b)
        loss = SelectionConsistencyLoss(la, lb, part, cfg.weights)
        for method in cfg.methods:
            cell = Cell(method, pair.pair_id)
            try:
                t0 = time.perf_counter()
                masks = run_method(method, pair, part, cfg, net)
                cell.time_s = time.perf_counter() - t0
                masks.check(part.valid_a, part.valid_b)
                cell.masks = masks
                cell.seam = extract_seam(masks, part)
                cell.quality = quality_sweep(pair.img_a, pair.img_b, cell.seam, cfg.sizes, part.r12)
                cell.loss = loss(masks.mask_a.astype(float))
            except Exception as exc:  # noqa: BLE001 - recorded, run continues
                cell.error = f"{type(exc).__name__}: {exc}"
                cell.quality = []
            cells.append(cell)
            if progress is not None:
                progress(cell)
    return BenchReport(cells, tuple(cfg.methods), [p.pair_id for p in corpus], tuple(cfg.sizes))


# -- report files -----------------------------------------------------------

BENCH_HEADER = ["method", "pair", "time_s", "N", "q_seam", "error"]


def _summary_header(sizes) -> list[str]:
    return ["method", "n_pairs", "n_failed", "mean_time_s", "median_time_s", "warm_mean_time_s", "fps"] + \
        [f"q@{n}" for n in sizes]


def write_bench_csv(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(BENCH_HEADER)
        for c in report.cells:
            q = dict(c.quality)
            for n in report.sizes:
                out.writerow([c.method, c.pair_id, repr(c.time_s), n,
                              repr(q[n]) if n in q else "nan", c.error or ""])


def write_summary_csv(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(_summary_header(report.sizes))
        for s in report.summary():
            out.writerow([s.method, s.n_pairs, s.n_failed, repr(s.mean_time_s), repr(s.median_time_s),
                          repr(s.warm_mean_time_s), repr(s.fps)] + [repr(s.mean_q[n]) for n in report.sizes])


def read_bench_csv(path) -> list[Cell]:
    """Cells (without masks) parsed back from ``bench.csv``."""
    cells: dict[tuple[str, str], Cell] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["method"], row["pair"])
            if key not in cells:
                cells[key] = Cell(key[0], key[1], float(row["time_s"]), error=row["error"] or None)
            if not row["error"]:
                cells[key].quality.append((int(row["N"]), float(row["q_seam"])))
    return list(cells.values())


def read_summary_csv(path) -> list[MethodSummary]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sizes = [int(k[2:]) for k in row if k.startswith("q@")]
            out.append(MethodSummary(row["method"], int(row["n_pairs"]), int(row["n_failed"]),
                                     float(row["mean_time_s"]), float(row["median_time_s"]),
                                     float(row["warm_mean_time_s"]), float(row["fps"]),
                                     {n: float(row[f"q@{n}"]) for n in sizes}))
    return out


def seam_overlay(composite: np.ndarray, seam: Seam, color=SEAM_COLOR) -> np.ndarray:
    img = np.array(composite, float)
    if img.ndim == 2:
        img = img[..., None]
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    for y, x in seam.pixels:
        img[y, x] = color
    return img


def write_pair_artifacts(report: BenchReport, corpus: list[Pair], root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    pairs = {p.pair_id: p for p in corpus}
    for c in report.cells:
        if not c.ok or c.masks is None:
            continue
        p = pairs[c.pair_id]
        stem = f"{c.pair_id}_{c.method}"
        comp = compose(p.img_a, p.img_b, c.masks.mask_a, c.masks.mask_b)
        save_image(comp, root / f"{stem}_composite.png")
        save_mask(c.masks.mask_a, root / f"{stem}_mask.png")
        save_image(seam_overlay(comp, c.seam), root / f"{stem}_seam.png")


def emit_report(report: BenchReport, out_dir, corpus: list[Pair] | None = None, figures: bool = True) -> None:
    """``bench.csv``, ``summary.csv``, optional figures and per-pair PNGs."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    write_bench_csv(report, out / "bench.csv")
    write_summary_csv(report, out / "summary.csv")
    if figures and report.methods:
        from .plotting import plot_quality_sweep, plot_timing
        summ = [s for s in report.summary() if s.n_failed < s.n_pairs]
        if summ:
            plot_quality_sweep(summ, out / "quality_vs_n.png")
            plot_timing(summ, out / "timing.png")
    if corpus is not None:
        write_pair_artifacts(report, corpus, out / "pairs")
