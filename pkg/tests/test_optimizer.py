import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from conftest import strip_masks
from dseam.corpus import suite_corpus
from dseam.imgcore import region_partition
from dseam.loss import LossWeights, SelectionConsistencyLoss
from dseam.metrics import extract_seam
from dseam.optimizer import (Adam, OptimConfig, OptimizationError, binarize_mask, init_soft_mask, optimize_mask,
                             soft_from_logits)
from dseam.synth import SyntheticPairSpec, gen_synthetic_pair

FOUR = ndimage.generate_binary_structure(2, 1)


def _part(h=8, w=10, a_end=8, b_start=2):
    va, vb = strip_masks(h, w, a_end, b_start)
    return region_partition(va, vb)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(lr=0)
    with pytest.raises(ValueError):
        OptimConfig(decay=1.5)
    assert OptimConfig().lr == 1e-2


def test_half_scheme_and_pinning():
    part = _part()
    s = soft_from_logits(init_soft_mask(part, "half"), part)
    assert np.all(s[part.r12] == 0.5)
    for scheme in ("half", "bisector"):
        s = soft_from_logits(init_soft_mask(part, scheme), part)
        assert np.all(s[part.r11] == 1.0) and np.all(s[part.r22] == 0.0)
    with pytest.raises(ValueError):
        init_soft_mask(part, "diagonal")
    with pytest.raises(ValueError):
        init_soft_mask(part, "sweep")


def test_bisector_splits_rectangle_at_midline():
    # overlap columns 2..7: the initial boundary falls between columns 4 and 5
    part = _part()
    s = soft_from_logits(init_soft_mask(part, "bisector"), part)
    a_side = s >= 0.5
    assert np.all(a_side[:, :5]) and not np.any(a_side[:, 5:])
    assert np.all(np.diff(s, axis=0) == 0)


def test_sweep_picks_the_cheap_split():
    part = _part(8, 14, 12, 2)
    a = np.random.default_rng(0).uniform(size=part.shape + (1,))
    b = a.copy()
    b[:, 7:] += 0.5   # sources agree only left of column 7, so the split belongs there
    loss = SelectionConsistencyLoss(a * part.valid_a[..., None], b * part.valid_b[..., None], part,
                                    LossWeights(m=3))
    sweep = soft_from_logits(init_soft_mask(part, "sweep", loss=loss), part)
    bisector = soft_from_logits(init_soft_mask(part, "bisector"), part)
    assert not np.any(sweep[:, 5:] >= 0.5)
    assert loss(sweep).total < loss(bisector).total


def test_adam_zero_gradient_is_identity():
    p = np.array([1.0, -2.0, 3.0])
    opt = Adam([p], lr=0.1)
    for _ in range(5):
        opt.step([np.zeros(3)])
    np.testing.assert_array_equal(p, [1.0, -2.0, 3.0])


def test_adam_rate_schedule():
    opt = Adam([np.zeros(1)], lr=1e-4, decay=0.96, decay_every=1000)
    assert opt.rate(0) == 1e-4
    assert opt.rate(1000) == pytest.approx(0.96e-4, rel=1e-14)
    assert opt.rate(2500) == pytest.approx(1e-4 * 0.96 ** 2.5, rel=1e-14)


def test_adam_first_step_is_lr_sign():
    p = np.array([0.0, 0.0])
    Adam([p], lr=0.01).step([np.array([3.0, -0.001])])
    np.testing.assert_allclose(p, [-0.01, 0.01], rtol=1e-4)


def test_binarize_examples():
    part = _part()
    m = binarize_mask(np.ones(part.shape), part)
    np.testing.assert_array_equal(m.mask_a, part.valid_a)
    np.testing.assert_array_equal(m.mask_b, part.r22)
    half = binarize_mask(np.full(part.shape, 0.5), part)
    np.testing.assert_array_equal(half.mask_a, part.valid_a)
    with pytest.raises(ValueError):
        binarize_mask(np.ones(part.shape), part, 1.0)


def test_binarize_flips_island():
    part = _part()
    s = np.zeros(part.shape)
    s[part.r11] = 1.0
    s[4, 6] = 1.0   # lone A pixel inside B territory
    m = binarize_mask(s, part)
    assert not m.mask_a[4, 6] and m.mask_b[4, 6]
    np.testing.assert_array_equal(m.mask_a, part.r11)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.95))
def test_binarize_always_partitions(seed, threshold):
    part = _part(9, 12, 9, 3)
    s = np.random.default_rng(seed).uniform(size=part.shape)
    m = binarize_mask(s, part, threshold)
    m.check(part.valid_a, part.valid_b)
    assert np.all(m.mask_a[part.r11]) and np.all(m.mask_b[part.r22])
    assert ndimage.label(m.mask_a, FOUR)[1] == 1 and ndimage.label(m.mask_b, FOUR)[1] == 1


def test_zero_parallax_pair():
    p = gen_synthetic_pair(SyntheticPairSpec(seed=1, height=48, width=48, offset=0, band_width=6))
    part = region_partition(p.valid_a, p.valid_b)
    masks, trace, soft = optimize_mask(p.img_a, p.img_b, part, OptimConfig(max_steps=200))
    masks.check(part.valid_a, part.valid_b)
    assert trace.totals.min() <= trace.totals[0]
    assert len(trace.history) <= 200 and len(trace.step_ms) == len(trace.history)
    assert np.all((soft > 0) & (soft < 1) | ~part.r12)


def test_seam_avoids_parallax_band():
    p = gen_synthetic_pair(SyntheticPairSpec(seed=4, height=64, width=64, texture="blobs", offset=5,
                                             band_width=8, noise=0.0))
    part = region_partition(p.valid_a, p.valid_b)
    masks, _, _ = optimize_mask(p.img_a, p.img_b, part)
    seam = extract_seam(masks, part)
    outside = np.mean([not p.misalignment[q] for q in seam.pixels])
    assert outside >= 0.5


def test_deterministic_and_connected(tmp_path):
    p = gen_synthetic_pair(SyntheticPairSpec(seed=2, height=48, width=48, offset=4, band_width=6, noise=0.01))
    part = region_partition(p.valid_a, p.valid_b)
    cfg = OptimConfig(max_steps=150)
    m1, t1, _ = optimize_mask(p.img_a, p.img_b, part, cfg)
    m2, t2, _ = optimize_mask(p.img_a, p.img_b, part, cfg)
    np.testing.assert_array_equal(m1.mask_a, m2.mask_a)
    np.testing.assert_array_equal(t1.totals, t2.totals)
    assert ndimage.label(m1.mask_a, FOUR)[1] == 1 and ndimage.label(m1.mask_b, FOUR)[1] == 1
    t1.write_csv(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "step,loss_non,loss_patch,total,ms" and len(lines) == len(t1.history) + 1


def test_non_finite_input_aborts():
    part = _part()
    a = np.full(part.shape + (3,), 0.5)
    a[3, 4, 0] = np.nan
    with pytest.raises(OptimizationError):
        optimize_mask(a, np.full(part.shape + (3,), 0.5), part, OptimConfig(max_steps=5), LossWeights(m=3), "rgb")


@pytest.mark.slow
def test_suite_loss_decreases_and_stays_monotone():
    for pair in suite_corpus(20):
        part = region_partition(pair.valid_a, pair.valid_b)
        masks, trace, _ = optimize_mask(pair.img_a, pair.img_b, part)
        masks.check(part.valid_a, part.valid_b)
        tot = trace.totals
        assert tot[-1] <= tot[0] + 1e-9, pair.pair_id
        assert np.all(tot[100:] <= tot[:-100] + 1e-6), pair.pair_id
