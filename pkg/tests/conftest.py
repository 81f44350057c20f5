import numpy as np
import pytest

from tileuda.raster import Raster


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_tile(rng, h=32, w=32, c=3, quantized=True):
    if quantized:
        return Raster(rng.integers(0, 256, (h, w, c)) / 255.0)
    return Raster(rng.random((h, w, c)))


def ks_distance(a, b):
    """Max distance between the empirical CDFs of two samples."""
    a, b = np.sort(np.ravel(a)), np.sort(np.ravel(b))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(fa - fb).max())
