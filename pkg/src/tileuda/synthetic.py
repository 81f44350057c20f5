"""Synthetic aerial-like tiles for tests, benchmarks and demos.

Tiles are smooth random fields with a domain-specific color cast, so that
source and target differ in color statistics but share structure.
"""

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .pipeline import DatasetManifest, SourceTile, TargetTile
from .raster import BinaryMask, HeightMap, Raster, quantize, save_heightmap, save_mask, save_raster

DOMAIN_CASTS = {
    "source": (np.array([0.42, 0.47, 0.38]), np.array([0.16, 0.15, 0.13])),
    "target": (np.array([0.50, 0.50, 0.52]), np.array([0.10, 0.09, 0.11])),
}


def smooth_field(rng, h, w, sigma):
    f = gaussian_filter(rng.standard_normal((h, w)), sigma, mode="wrap")
    return (f - f.mean()) / (f.std() + 1e-12)


def synthetic_tile(rng, size=64, domain="target", quantized=True):
    """RGB tile plus its canopy field (higher = more vegetation)."""
    mean, scale = DOMAIN_CASTS[domain]
    canopy = smooth_field(rng, size, size, sigma=size / 16)
    texture = smooth_field(rng, size, size, sigma=1.0)
    green = np.array([-0.6, 0.3, -0.5])
    img = mean + scale * (canopy[..., None] * green + 0.4 * texture[..., None]
                          + 0.3 * rng.standard_normal((size, size, 3)))
    img = np.clip(img, 0.0, 1.0)
    if quantized:
        img = quantize(img) / 255.0
    return img, canopy


def make_dataset(root, n_targets=10, n_pool=5, size=64, seed=0, resolution_factor=1,
                 with_ground_truth=True) -> Path:
    """Write tiles and a ``manifest.json`` under ``root``; returns the manifest path."""
    root = Path(root)
    (root / "target").mkdir(parents=True, exist_ok=True)
    (root / "source").mkdir(parents=True, exist_ok=True)
    (root / "truth").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    targets, pool = [], []
    big = size * resolution_factor
    for i in range(n_targets):
        tid = f"t{i:04d}"
        img, canopy = synthetic_tile(rng, big, "target")
        save_raster(Raster(img), root / "target" / f"{tid}.png")
        mask = height = None
        if with_ground_truth:
            small = canopy.reshape(size, resolution_factor, size, resolution_factor).mean(axis=(1, 3))
            mask = root / "truth" / f"{tid}_mask.png"
            height = root / "truth" / f"{tid}_height.tif"
            save_mask(BinaryMask(small > 0.3), mask)
            save_heightmap(HeightMap(np.clip(8.0 * small, 0.0, None).astype(np.float32)), height)
        targets.append(TargetTile(tid, root / "target" / f"{tid}.png", mask, height))
    for j in range(n_pool):
        sid = f"s{j:04d}"
        img, _ = synthetic_tile(rng, size, "source")
        save_raster(Raster(img), root / "source" / f"{sid}.png")
        pool.append(SourceTile(sid, root / "source" / f"{sid}.png"))
    path = root / "manifest.json"
    DatasetManifest(targets, pool, resolution_factor).save(path)
    return path
