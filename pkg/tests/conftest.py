import numpy as np
import pytest

from gvcot import RasterImage


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)


def noise_image(rng, h=32, w=32, lo=0, hi=256):
    return RasterImage(rng.integers(lo, hi, size=(h, w, 3)).astype(np.uint8))


def smooth_background(rng, h=64, w=64):
    """Gaussian random field per channel, stretched to the full 0..255 range."""
    from scipy.ndimage import gaussian_filter
    z = gaussian_filter(rng.normal(size=(h, w, 3)), (6, 6, 0))
    z = (z - z.min(axis=(0, 1))) / (np.ptp(z, axis=(0, 1)) + 1e-12) * 255
    return RasterImage(z.astype(np.uint8))


def random_rect_mask(rng, h=64, w=64, min_area=100):
    while True:
        bw, bh = int(rng.integers(1, w + 1)), int(rng.integers(1, h + 1))
        if bw * bh >= min_area:
            break
    x, y = int(rng.integers(0, w - bw + 1)), int(rng.integers(0, h - bh + 1))
    bits = np.zeros((h, w), dtype=bool)
    bits[y:y + bh, x:x + bw] = True
    return bits


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
