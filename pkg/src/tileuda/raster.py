"""Raster containers, tile I/O, mean downsampling and 8-bit histograms.

Pixel values are held as float64 in [0, 1]. Integer semantics (8/16-bit
storage, 256-bin histograms) only appear at the edges, where quantization
uses round-half-away-from-zero: ``q = floor(v * (2**depth - 1) + 0.5)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import tifffile
from PIL import Image

PathLike = Union[str, Path]

N_BINS = 256


class RasterError(ValueError):
    """Raised for invalid raster contents or unsupported files."""


def quantize(values: np.ndarray, depth: int = 8) -> np.ndarray:
    """Map [0, 1] floats to unsigned integers of the given bit depth."""
    if depth not in (8, 16):
        raise RasterError(f"unsupported bit depth {depth}")
    top = (1 << depth) - 1
    q = np.floor(np.asarray(values, dtype=np.float64) * top + 0.5)
    return np.clip(q, 0, top).astype(np.uint8 if depth == 8 else np.uint16)


@dataclass(frozen=True, eq=False)
class Raster:
    """An H x W x C image (C in {1, 3}) with values in [0, 1]."""

    values: np.ndarray
    resolution: Optional[float] = None
    tile_id: Optional[str] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise RasterError(f"expected HxWxC array, got shape {v.shape}")
        h, w, c = v.shape
        if h < 1 or w < 1:
            raise RasterError(f"empty raster {h}x{w}")
        if c not in (1, 3):
            raise RasterError(f"unsupported channel count {c}")
        if not np.all(np.isfinite(v)):
            raise RasterError("raster contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise RasterError("raster values outside [0, 1]")
        if v is self.values:
            v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "Raster":
        """New raster sharing this one's metadata."""
        return replace(self, values=values)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.tile_id == other.tile_id
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )


@dataclass(frozen=True)
class Histogram:
    """256-bin intensity histogram of one channel."""

    bins: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bins)
        if b.shape != (N_BINS,):
            raise RasterError(f"histogram must have {N_BINS} bins, got {b.shape}")
        if np.any(b < 0):
            raise RasterError("negative histogram count")
        object.__setattr__(self, "bins", b.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    def normalized(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise RasterError("cannot normalize an empty histogram")
        return self.bins / total


@dataclass(frozen=True, eq=False)
class HeightMap:
    """Canopy heights in meters; ``nodata`` marks pixels to ignore."""

    values: np.ndarray
    nodata: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise RasterError(f"height map must be a non-empty 2-D array, got {v.shape}")
        mask = None
        if self.nodata is not None:
            mask = np.asarray(self.nodata, dtype=bool)
            if mask.shape != v.shape:
                raise RasterError("nodata mask does not match height map")
        valid = v if mask is None else v[~mask]
        if not np.all(np.isfinite(valid)) or np.any(valid < 0):
            raise RasterError("heights must be finite and non-negative where valid")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "nodata", mask)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def valid(self) -> np.ndarray:
        if self.nodata is None:
            return np.ones(self.values.shape, dtype=bool)
        return ~self.nodata


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean canopy / not-canopy plane."""

    values: np.ndarray = field()

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.size == 0:
            raise RasterError(f"mask must be a non-empty 2-D array, got {v.shape}")
        object.__setattr__(self, "values", v.astype(bool))

    @property
    def shape(self) -> tuple:
        return self.values.shape


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def read_sidecar(path: PathLike) -> dict:
    """Per-tile metadata ``{"resolution_m", "tile_id"}`` if a sidecar exists."""
    side = _sidecar_path(Path(path))
    if not side.exists():
        return {}
    with open(side) as fh:
        return json.load(fh)


def _read_pixels(path: Path) -> np.ndarray:
    suffix = path.suffix.lower()
    try:
        if suffix in (".tif", ".tiff"):
            return np.asarray(tifffile.imread(path))
        with Image.open(path) as img:
            if img.mode == "P":
                img = img.convert("RGB")
            return np.asarray(img)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise RasterError(f"cannot read {path}: {exc}") from exc


def load_raster(path: PathLike) -> Raster:
    """Read an 8-bit PNG or 8/16-bit TIFF into a [0, 1] raster."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    data = _read_pixels(path)
    if data.dtype == np.uint8:
        scale = 255.0
    elif data.dtype == np.uint16:
        scale = 65535.0
    elif data.dtype == bool:
        data, scale = data.astype(np.uint8), 1.0
    else:
        raise RasterError(f"{path}: unsupported pixel type {data.dtype}")
    if data.ndim == 3 and data.shape[2] not in (1, 3):
        raise RasterError(f"{path}: unsupported channel count {data.shape[2]}")
    if data.ndim not in (2, 3) or data.shape[0] == 0 or data.shape[1] == 0:
        raise RasterError(f"{path}: bad dimensions {data.shape}")
    meta = read_sidecar(path)
    return Raster(
        data.astype(np.float64) / scale,
        resolution=meta.get("resolution_m"),
        tile_id=meta.get("tile_id", path.stem),
    )


def save_raster(raster: Raster, path: PathLike, depth: int = 8, sidecar: bool = False) -> None:
    """Quantize and write ``raster``; PNG for 8-bit, TIFF for 16-bit or .tif paths."""
    path = Path(path)
    q = quantize(raster.values, depth)
    if raster.channels == 1:
        q = q[:, :, 0]
    suffix = path.suffix.lower()
    if suffix in (".tif", ".tiff"):
        tifffile.imwrite(path, q, photometric="rgb" if q.ndim == 3 else "minisblack")
    elif suffix == ".png":
        if depth != 8:
            raise RasterError("PNG output is 8-bit only; use a .tif path for 16-bit")
        Image.fromarray(q).save(path, format="PNG")
    else:
        raise RasterError(f"unsupported output format {suffix!r}")
    if sidecar:
        meta = {"tile_id": raster.tile_id or path.stem}
        if raster.resolution is not None:
            meta["resolution_m"] = raster.resolution
        with open(_sidecar_path(path), "w") as fh:
            json.dump(meta, fh, sort_keys=True)


def load_heightmap(path: PathLike) -> HeightMap:
    """Read a float32 height TIFF; NaN pixels become nodata."""
    data = np.asarray(tifffile.imread(Path(path)), dtype=np.float64)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    nodata = ~np.isfinite(data)
    return HeightMap(np.where(nodata, 0.0, data), nodata if nodata.any() else None)


def save_heightmap(heights: HeightMap, path: PathLike) -> None:
    out = heights.values.astype(np.float32)
    if heights.nodata is not None:
        out = np.where(heights.nodata, np.float32(np.nan), out)
    tifffile.imwrite(Path(path), out, photometric="minisblack")


def load_mask(path: PathLike) -> BinaryMask:
    r = load_raster(path)
    if r.channels != 1:
        raise RasterError(f"{path}: mask must be single-channel")
    return BinaryMask(r.values[:, :, 0] >= 0.5)


def save_mask(mask: BinaryMask, path: PathLike) -> None:
    Image.fromarray(np.where(mask.values, 255, 0).astype(np.uint8)).save(Path(path), format="PNG")


def downsample_mean(raster: Raster, factor: int) -> Raster:
    """Block-mean aggregation by an integer factor.

    Ragged bottom/right edges that do not fill a whole block are cropped.
    """
    if not isinstance(factor, (int, np.integer)) or factor <= 0:
        raise RasterError(f"factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return raster
    h, w, c = raster.shape
    oh, ow = h // factor, w // factor
    if oh == 0 or ow == 0:
        raise RasterError(f"factor {factor} exceeds raster size {h}x{w}")
    block = raster.values[: oh * factor, : ow * factor]
    out = block.reshape(oh, factor, ow, factor, c).mean(axis=(1, 3))
    res = None if raster.resolution is None else raster.resolution * factor
    return Raster(np.clip(out, 0.0, 1.0), resolution=res, tile_id=raster.tile_id)


def channel_histogram(raster: Raster, channel: int) -> Histogram:
    """256-bin histogram of ``round(v * 255)`` for one channel."""
    if not 0 <= channel < raster.channels:
        raise RasterError(f"channel {channel} out of range for {raster.channels}-channel raster")
    q = quantize(raster.values[:, :, channel], 8)
    return Histogram(np.bincount(q.ravel(), minlength=N_BINS))
