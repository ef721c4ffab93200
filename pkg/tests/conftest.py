import numpy as np
import pytest

from dseam.imgcore import region_partition

_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if rep.when == "call":
        _RESULTS[num] = ("PASS" if rep.passed else "FAIL", title, detail)
    elif rep.failed:
        _RESULTS[num] = ("FAIL", title, f"{rep.when} error")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        status, title, detail = _RESULTS[num]
        line = f"[{status}] criterion {num:2d}: {title}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))


def strip_masks(h, w, a_end, b_start):
    """Valid masks of two horizontal crops: A = columns [0, a_end), B = [b_start, w)."""
    va = np.zeros((h, w), bool)
    va[:, :a_end] = True
    vb = np.zeros((h, w), bool)
    vb[:, b_start:] = True
    return va, vb


def random_pair(rng, h, w, overlap_cols, channels=3):
    """Random images on a two-strip layout with ``overlap_cols`` shared columns."""
    a_end = (w + overlap_cols + 1) // 2
    b_start = a_end - overlap_cols
    va, vb = strip_masks(h, w, a_end, b_start)
    a = rng.uniform(0.05, 1.0, (h, w, channels)) * va[..., None]
    b = rng.uniform(0.05, 1.0, (h, w, channels)) * vb[..., None]
    return a, b, region_partition(va, vb)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
