"""Seam prediction for image stitching.

Masks are found by minimising a selection consistency loss, either per
pair (``optimize_mask``) or with a small trained network (``predict``),
and compared against dynamic-programming and graph-cut baselines.
"""
from .dp import cost_map, dp_seam
from .graphcut import gc_seam, max_flow
from .imgcore import MaskPair, RegionPartition, compose, region_partition
from .loss import LossBreakdown, LossSpace, LossWeights, SelectionConsistencyLoss, total_loss
from .metrics import extract_seam, quality_sweep, seam_quality, zncc
from .optimizer import OptimConfig, binarize_mask, optimize_mask

__version__ = "0.1.0"

__all__ = [
    "LossBreakdown", "LossSpace", "LossWeights", "MaskPair", "OptimConfig", "RegionPartition",
    "SelectionConsistencyLoss", "binarize_mask", "compose", "cost_map", "dp_seam", "extract_seam",
    "gc_seam", "max_flow", "optimize_mask", "quality_sweep", "region_partition", "seam_quality",
    "total_loss", "zncc",
]
