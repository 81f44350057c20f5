"""Batch orchestration: manifests, configs, splits, adaptation runs, evaluation."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import tomli
from PIL import Image, ImageDraw, ImageFont

from .entropy import MatchConfig, image_entropy, match_with, select_reference
from .metrics import EvalRecord, EvalReport, aggregate, binarize, iou, mae, pooled_iou
from .raster import (
    Raster,
    RasterError,
    downsample_mean,
    load_heightmap,
    load_mask,
    load_raster,
    quantize,
    save_raster,
)
from .transforms import TransformSpec

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


class ManifestError(ValueError):
    pass


class MissingPredictionsError(FileNotFoundError):
    def __init__(self, missing: List[str]):
        super().__init__("missing predictions for tiles: " + ", ".join(missing))
        self.missing = missing


# -- manifest -----------------------------------------------------------------

@dataclass(frozen=True)
class TargetTile:
    tile_id: str
    image: Path
    mask: Optional[Path] = None
    height: Optional[Path] = None


@dataclass(frozen=True)
class SourceTile:
    tile_id: str
    image: Path


@dataclass
class DatasetManifest:
    target_tiles: List[TargetTile]
    source_pool: List[SourceTile]
    resolution_factor: int = 1

    def target(self, tile_id: str) -> TargetTile:
        for t in self.target_tiles:
            if t.tile_id == tile_id:
                return t
        raise KeyError(tile_id)

    def to_dict(self, root: Optional[Path] = None) -> dict:
        def rel(p):
            if p is None:
                return None
            return os.path.relpath(p, root) if root is not None else str(p)

        return {
            "resolution_factor": self.resolution_factor,
            "target_tiles": [
                {k: v for k, v in (("tile_id", t.tile_id), ("image", rel(t.image)),
                                   ("mask", rel(t.mask)), ("height", rel(t.height))) if v is not None}
                for t in self.target_tiles
            ],
            "source_pool": [{"tile_id": s.tile_id, "image": rel(s.image)} for s in self.source_pool],
        }

    def save(self, path: PathLike) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            json.dump(self.to_dict(path.parent.resolve()), fh, indent=2)


def _unique(ids, what):
    seen = set()
    for i in ids:
        if i in seen:
            raise ManifestError(f"duplicate tile_id {i!r} in {what}")
        seen.add(i)


def load_manifest(path: PathLike, check_files: bool = True) -> DatasetManifest:
    """Read a manifest; relative paths resolve against the manifest's folder."""
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    root = path.parent.resolve()

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else root / p

    targets = [
        TargetTile(str(t["tile_id"]), resolve(t["image"]), resolve(t.get("mask")), resolve(t.get("height")))
        for t in raw.get("target_tiles", [])
    ]
    pool = [SourceTile(str(s["tile_id"]), resolve(s["image"])) for s in raw.get("source_pool", [])]
    factor = int(raw.get("resolution_factor", 1))
    if factor < 1:
        raise ManifestError("resolution_factor must be a positive integer")
    _unique([t.tile_id for t in targets], "target_tiles")
    _unique([s.tile_id for s in pool], "source_pool")
    if check_files:
        missing = [str(p) for t in targets for p in (t.image, t.mask, t.height) if p is not None and not p.exists()]
        missing += [str(s.image) for s in pool if not s.image.exists()]
        if missing:
            raise ManifestError("manifest references missing files: " + ", ".join(missing))
    return DatasetManifest(targets, pool, factor)


# -- run configuration --------------------------------------------------------

@dataclass
class RunConfig:
    transform: TransformSpec = field(default_factory=TransformSpec)
    match: MatchConfig = field(default_factory=MatchConfig)
    split_ratio: float = 0.8
    seed: int = 0
    workers: Union[int, str] = 1
    global_reference: Optional[str] = None
    # wall-clock fields make reruns differ byte-wise, so they are opt-in
    record_timing: bool = False

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")
        if self.workers != "auto" and int(self.workers) < 1:
            raise ValueError("workers must be a positive integer or 'auto'")

    def worker_count(self) -> int:
        if self.workers == "auto":
            return os.cpu_count() or 1
        return int(self.workers)

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "match": asdict(self.match),
            "run": {
                "split_ratio": self.split_ratio,
                "seed": self.seed,
                "workers": self.workers,
                "global_reference": self.global_reference,
                "record_timing": self.record_timing,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        run = dict(d.get("run", {}))
        match = dict(d.get("match", {}))
        if "global_reference" in match:
            run.setdefault("global_reference", match.pop("global_reference"))
        return cls(
            transform=TransformSpec.from_dict(d.get("transform", {})),
            match=MatchConfig(**match),
            **run,
        )


def load_config(path: Optional[PathLike]) -> RunConfig:
    """TOML with optional [transform], [match] and [run] tables."""
    if path is None:
        return RunConfig()
    with open(path, "rb") as fh:
        return RunConfig.from_dict(tomli.load(fh))


# -- split ----------------------------------------------------------------------

@dataclass
class SplitSpec:
    train_ids: List[str]
    test_ids: List[str]
    ratio: float = 0.8
    seed: int = 0

    def save(self, path: PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)

    @classmethod
    def load(cls, path: PathLike) -> "SplitSpec":
        with open(path) as fh:
            return cls(**json.load(fh))


def split_ids(ids: Sequence[str], ratio: float, seed: int) -> SplitSpec:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    if len(ids) == 0:
        raise ValueError("nothing to split")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train = int(np.floor(ratio * len(ids)))
    return SplitSpec(shuffled[:n_train], shuffled[n_train:], ratio, seed)


def split_dataset(manifest: DatasetManifest, ratio: float = 0.8, seed: int = 0) -> SplitSpec:
    """Seeded shuffle of target tile ids; the first ``floor(ratio * N)`` train."""
    return split_ids([t.tile_id for t in manifest.target_tiles], ratio, seed)


# -- adaptation -------------------------------------------------------------------

def load_target(tile: TargetTile, factor: int) -> Raster:
    r = load_raster(tile.image)
    r = Raster(r.values, resolution=r.resolution, tile_id=tile.tile_id)
    return downsample_mean(r, factor)


def load_pool(manifest: DatasetManifest) -> List[Tuple[str, Raster]]:
    return [(s.tile_id, load_raster(s.image)) for s in manifest.source_pool]


def _match_one(tile, pool, pool_index, manifest, config):
    t0 = time.perf_counter()
    target = load_target(tile, manifest.resolution_factor)
    if config.global_reference is not None:
        ref = pool[pool_index[config.global_reference]][1]
        result, out = match_with(target, config.global_reference, ref, config.transform, config.match)
    else:
        result, out = select_reference(target, pool, config.transform, config.match, target_id=tile.tile_id)
    return result, out, (time.perf_counter() - t0) * 1000.0


def _record(tile, result, wall_ms, config):
    rec = {"tile_id": tile.tile_id}
    rec.update(result.to_dict())
    rec["wall_ms"] = round(wall_ms, 3) if config.record_timing else None
    return rec


def _map_tiles(fn, tiles, workers):
    """Apply ``fn`` to each tile; results (or the exception) in input order."""
    def safe(tile):
        try:
            return fn(tile), None
        except Exception as exc:  # recorded per tile
            return None, exc

    if workers <= 1:
        return [safe(t) for t in tiles]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(safe, tiles))


def _prepare(manifest, config):
    if not manifest.source_pool:
        raise ValueError("source pool is empty")
    pool = load_pool(manifest)
    pool_index = {tid: i for i, (tid, _) in enumerate(pool)}
    if config.global_reference is not None and config.global_reference not in pool_index:
        raise ValueError(f"global reference {config.global_reference!r} not in source pool")
    return pool, pool_index


def match_records(manifest: DatasetManifest, config: RunConfig):
    """Dry-run matching; yields one record dict per target tile."""
    pool, pool_index = _prepare(manifest, config)

    def work(tile):
        result, _, wall_ms = _match_one(tile, pool, pool_index, manifest, config)
        return _record(tile, result, wall_ms, config)

    for tile, (rec, exc) in zip(manifest.target_tiles,
                                _map_tiles(work, manifest.target_tiles, config.worker_count())):
        yield rec if exc is None else {"tile_id": tile.tile_id, "error": str(exc)}


def _output_names(manifest):
    names = {t.tile_id: t.image.stem for t in manifest.target_tiles}
    if len(set(names.values())) != len(names):
        names = {tid: tid for tid in names}
    return names


def run_adaptation(manifest: DatasetManifest, config: RunConfig, out_dir: PathLike) -> dict:
    """Adapt every target tile and write tiles, ``records.jsonl`` and ``summary.json``.

    Returns the summary; ``summary["exit_code"]`` is 2 when some tiles failed.
    """
    t_start = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool, pool_index = _prepare(manifest, config)
    names = _output_names(manifest)

    def work(tile):
        result, out, wall_ms = _match_one(tile, pool, pool_index, manifest, config)
        save_raster(out, out_dir / f"{names[tile.tile_id]}.png")
        return _record(tile, result, wall_ms, config)

    outcomes = _map_tiles(work, manifest.target_tiles, config.worker_count())
    records, failures = [], []
    for tile, (rec, exc) in zip(manifest.target_tiles, outcomes):
        if exc is None:
            records.append(rec)
        else:
            log.warning("tile %s failed: %s", tile.tile_id, exc)
            failures.append({"tile_id": tile.tile_id, "error": str(exc)})

    with open(out_dir / "records.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    n_acc = sum(1 for r in records if r["accepted"])
    summary = {
        "config": config.to_dict(),
        "method": config.transform.label,
        "n_targets": len(manifest.target_tiles),
        "n_records": len(records),
        "accepted": n_acc,
        "fallback": len(records) - n_acc,
        "failures": failures,
        "runtime_s": round(time.perf_counter() - t_start, 3) if config.record_timing else None,
        "exit_code": EXIT_PARTIAL if failures else EXIT_OK,
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# -- evaluation ---------------------------------------------------------------------

@dataclass
class EvalOptions:
    threshold: float = 0.5
    test_ids: Optional[Sequence[str]] = None
    mask_to_canopy: bool = False
    pooled_iou: bool = False


def _find(pred_dir: Path, tile_id: str, suffixes) -> Optional[Path]:
    for s in suffixes:
        p = pred_dir / f"{tile_id}{s}"
        if p.exists():
            return p
    return None


def evaluate_run(pred_dir: PathLike, manifest: DatasetManifest, label: str,
                 options: EvalOptions = EvalOptions()) -> EvalReport:
    """Score ``<pred_dir>/<tile_id>.png`` (cover probability) and
    ``<pred_dir>/<tile_id>.tif`` (heights, m) against the manifest's ground truth.
    """
    pred_dir = Path(pred_dir)
    tiles = manifest.target_tiles
    if options.test_ids is not None:
        wanted = set(options.test_ids)
        tiles = [t for t in tiles if t.tile_id in wanted]
    tiles = [t for t in tiles if t.mask is not None or t.height is not None]
    if not tiles:
        raise ValueError("no target tiles with ground truth to evaluate")

    missing, jobs = [], []
    for t in tiles:
        cover = _find(pred_dir, t.tile_id, (".png",)) if t.mask is not None else None
        height = _find(pred_dir, t.tile_id, (".tif", ".tiff")) if t.height is not None else None
        if (t.mask is not None and cover is None) or (t.height is not None and height is None):
            missing.append(t.tile_id)
        jobs.append((t, cover, height))
    if missing:
        raise MissingPredictionsError(missing)

    records, mask_pairs = [], []
    for t, cover, height in jobs:
        rec_iou = rec_mae = None
        gt_mask = load_mask(t.mask) if t.mask is not None else None
        if cover is not None:
            pred_mask = binarize(load_raster(cover), options.threshold)
            rec_iou = iou(pred_mask, gt_mask)
            mask_pairs.append((pred_mask, gt_mask))
        if height is not None:
            restrict = gt_mask.values if (options.mask_to_canopy and gt_mask is not None) else None
            rec_mae = mae(load_heightmap(height), load_heightmap(t.height), restrict)
        records.append(EvalRecord(t.tile_id, rec_iou, rec_mae))
    report = aggregate(records, label)
    if options.pooled_iou and mask_pairs:
        report.miou = pooled_iou(mask_pairs)
        report.iou_pooling = "global"
    return report


# -- panels and stats ---------------------------------------------------------------

CAPTION_HEIGHT = 24
GUTTER = 4


def render_panel(variants: Sequence[Tuple[str, Raster]], gutter: int = GUTTER,
                 caption_height: int = CAPTION_HEIGHT) -> np.ndarray:
    """Side-by-side uint8 RGB composite with a caption strip above each image.

    Image ``k`` occupies rows ``[caption_height, caption_height + H)`` and
    columns ``[k * (W + gutter), k * (W + gutter) + W)``.
    """
    if not variants:
        raise ValueError("nothing to render")
    h, w = variants[0][1].height, variants[0][1].width
    for label, r in variants:
        if (r.height, r.width) != (h, w):
            raise RasterError(f"variant {label!r} is {r.height}x{r.width}, expected {h}x{w}")
    k = len(variants)
    canvas = np.full((caption_height + h, k * w + (k - 1) * gutter, 3), 255, dtype=np.uint8)
    img = Image.fromarray(canvas)
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    for i, (label, _) in enumerate(variants):
        draw.text((i * (w + gutter) + 4, 4), label, fill=(0, 0, 0), font=font)
    canvas = np.array(img)
    for i, (_, r) in enumerate(variants):
        q = quantize(r.values, 8)
        if q.shape[2] == 1:
            q = np.repeat(q, 3, axis=2)
        x0 = i * (w + gutter)
        canvas[caption_height:, x0:x0 + w] = q
    return canvas


def save_panel(canvas: np.ndarray, path: PathLike) -> None:
    Image.fromarray(canvas).save(Path(path), format="PNG")


def panel_variants(tile_id: str, manifest: DatasetManifest, variants: Sequence[Tuple[str, PathLike]],
                   include_target: bool = False) -> List[Tuple[str, Raster]]:
    tile = manifest.target(tile_id)
    out = []
    if include_target:
        out.append(("Target", load_target(tile, manifest.resolution_factor)))
    out.extend((label, load_raster(p)) for label, p in variants)
    return out


def _domain_stats(rasters: List[Raster]) -> dict:
    if not rasters:
        return {"count": 0}
    ent = [image_entropy(r) for r in rasters]
    n_ch = rasters[0].channels
    pix = np.concatenate([r.values.reshape(-1, r.channels) for r in rasters if r.channels == n_ch])
    return {
        "count": len(rasters),
        "entropy": {"min": float(min(ent)), "mean": float(np.mean(ent)), "max": float(max(ent))},
        "channel_mean": [float(m) for m in pix.mean(axis=0)],
        "channel_std": [float(s) for s in pix.std(axis=0)],
    }


def dataset_stats(manifest: DatasetManifest) -> dict:
    """Entropy spread and color moments per domain (target after harmonization)."""
    targets = [load_target(t, manifest.resolution_factor) for t in manifest.target_tiles]
    return {
        "target": _domain_stats(targets),
        "source": _domain_stats([r for _, r in load_pool(manifest)]),
        "resolution_factor": manifest.resolution_factor,
    }
