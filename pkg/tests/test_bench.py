import math

import numpy as np
import pytest

from dseam.bench import (BENCH_HEADER, BenchConfig, BenchReport, Cell, emit_report, read_bench_csv,
                         read_summary_csv, run_benchmark, seam_overlay, summarize, write_summary_csv)
from dseam.corpus import Pair, suite_corpus
from dseam.metrics import SWEEP_SIZES, Seam
from dseam.net import NetConfig, NetWeights
from dseam.optimizer import OptimConfig


@pytest.fixture(scope="module")
def corpus():
    return suite_corpus(2, size=48)


@pytest.fixture(scope="module")
def report(corpus):
    cfg = BenchConfig(methods=("dp", "gc", "dseam-opt"), optim=OptimConfig(max_steps=60))
    return run_benchmark(corpus, cfg)


def test_single_pair_dp(corpus):
    r = run_benchmark(corpus[:1], BenchConfig(methods=("dp",)))
    assert len(r.cells) == 1
    c = r.cells[0]
    assert c.ok and c.time_s > 0 and [n for n, _ in c.quality] == list(SWEEP_SIZES)
    s = r.summary()[0]
    assert s.fps == 1.0 / c.time_s
    assert s.n_pairs == 1 and s.n_failed == 0 and math.isnan(s.warm_mean_time_s)


def test_report_completeness(report, corpus):
    assert len(report.cells) == 3 * len(corpus)
    for m in report.methods:
        for p in corpus:
            c = report.cell(m, p.pair_id)
            assert c.ok, c.error
            c.masks.check(p.valid_a, p.valid_b)
            assert 0.0 <= c.q(15) <= 1.0
            assert c.loss is not None and c.loss.loss_pixel == 0.0


def test_emit_report_files(report, corpus, tmp_path):
    emit_report(report, tmp_path, corpus)
    rows = (tmp_path / "bench.csv").read_text().splitlines()
    assert rows[0].split(",") == BENCH_HEADER
    assert len(rows) - 1 == 3 * len(corpus) * 14
    for f in ("summary.csv", "quality_vs_n.png", "timing.png"):
        assert (tmp_path / f).stat().st_size > 0
    for m in report.methods:
        for kind in ("composite", "mask", "seam"):
            assert (tmp_path / "pairs" / f"000_{m}_{kind}.png").exists()


def test_csv_parse_back_recovers_aggregates(report, tmp_path):
    emit_report(report, tmp_path, figures=False)
    cells = read_bench_csv(tmp_path / "bench.csv")
    for m, s in zip(report.methods, report.summary()):
        again = summarize([c for c in cells if c.method == m], m)
        assert again == s
    assert read_summary_csv(tmp_path / "summary.csv") == report.summary()


def test_empty_method_list_gives_header_only(tmp_path):
    cfg = BenchConfig(methods=())
    bare = BenchReport([], cfg.methods, ["000"])
    write_summary_csv(bare, tmp_path / "summary.csv")
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("method,")
    emit_report(bare, tmp_path / "rep")
    assert len((tmp_path / "rep" / "bench.csv").read_text().splitlines()) == 1


def test_failures_are_recorded(corpus, tmp_path):
    broken = Pair("bad", corpus[0].img_a, corpus[0].img_b, np.zeros_like(corpus[0].valid_a), corpus[0].valid_b)
    r = run_benchmark([broken, corpus[0]], BenchConfig(methods=("dp",)))
    assert not r.cell("dp", "bad").ok and "partition" in r.cell("dp", "bad").error
    assert r.cell("dp", corpus[0].pair_id).ok
    s = r.summary()[0]
    assert s.n_pairs == 2 and s.n_failed == 1
    emit_report(r, tmp_path, figures=False)
    rows = (tmp_path / "bench.csv").read_text().splitlines()
    assert len(rows) - 1 == 2 * 14
    assert any(",nan," in row for row in rows)


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(methods=("sift",))
    with pytest.raises(ValueError):
        run_benchmark([], BenchConfig())
    with pytest.raises(ValueError):
        run_benchmark(suite_corpus(1, size=48), BenchConfig(methods=("dseam-net",)))


def test_net_and_work_size(corpus):
    net = NetWeights(NetConfig(32, 32, (4, 8, 8)))
    cfg = BenchConfig(methods=("dseam-net", "dseam-opt"), optim=OptimConfig(max_steps=30), work_size=32)
    r = run_benchmark(corpus[:1], cfg, net=net)
    for c in r.cells:
        assert c.ok, c.error
        assert c.masks.mask_a.shape == corpus[0].shape


def test_deterministic_quality(corpus):
    cfg = BenchConfig(methods=("dp", "gc"))
    r1, r2 = run_benchmark(corpus, cfg), run_benchmark(corpus, cfg)
    assert [c.quality for c in r1.cells] == [c.quality for c in r2.cells]


def test_seam_overlay_marks_pixels():
    img = np.zeros((4, 4, 1))
    out = seam_overlay(img, Seam(((1, 2), (2, 2)), (1, 2), (3, 2)))
    assert out.shape == (4, 4, 3)
    np.testing.assert_array_equal(out[1, 2], [1.0, 0.0, 0.0])
    assert out.sum() == 2.0


def test_summary_warm_mean():
    cells = [Cell("dp", f"{i}", t, [(15, q)]) for i, (t, q) in enumerate([(3.0, 0.1), (1.0, 0.2), (2.0, 0.3)])]
    s = summarize(cells, "dp", (15,))
    assert s.mean_time_s == 2.0 and s.median_time_s == 2.0 and s.warm_mean_time_s == 1.5
    assert s.fps == 0.5 and s.mean_q[15] == pytest.approx(0.2)
