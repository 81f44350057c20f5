"""Canopy cover IoU, canopy height MAE, and comparison tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .raster import BinaryMask, HeightMap, Raster, RasterError

DECIMALS = 4


def binarize(prob: Raster, threshold: float = 0.5) -> BinaryMask:
    """Canopy where the probability is at least ``threshold``."""
    if prob.channels != 1:
        raise RasterError(f"binarize expects a single-channel raster, got {prob.channels}")
    return BinaryMask(prob.values[:, :, 0] >= threshold)


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise RasterError(f"dimension mismatch: {a.shape} vs {b.shape}")


def iou_counts(pred: BinaryMask, gt: BinaryMask):
    _check_shapes(pred, gt)
    inter = int(np.count_nonzero(pred.values & gt.values))
    union = int(np.count_nonzero(pred.values | gt.values))
    return inter, union


def iou(pred: BinaryMask, gt: BinaryMask) -> float:
    """Intersection over union; two empty masks score 1.0."""
    inter, union = iou_counts(pred, gt)
    return 1.0 if union == 0 else inter / union


def mae(pred: HeightMap, gt: HeightMap, mask: Optional[np.ndarray] = None) -> float:
    """Mean absolute height error (m) over pixels valid in both maps.

    ``mask`` optionally restricts the evaluation further (e.g. to canopy).
    """
    _check_shapes(pred, gt)
    valid = pred.valid & gt.valid
    if mask is not None:
        valid = valid & np.asarray(mask, dtype=bool)
    n = int(np.count_nonzero(valid))
    if n == 0:
        raise RasterError("no valid pixels to compare")
    return float(np.abs(pred.values[valid] - gt.values[valid]).sum() / n)


@dataclass(frozen=True)
class EvalRecord:
    tile_id: str
    iou: Optional[float] = None
    mae_m: Optional[float] = None

    def __post_init__(self):
        if self.iou is None and self.mae_m is None:
            raise ValueError(f"record {self.tile_id!r} has no metric")

    def to_dict(self) -> dict:
        return {"tile_id": self.tile_id, "iou": self.iou, "mae_m": self.mae_m}


@dataclass
class EvalReport:
    method_label: str
    records: List[EvalRecord] = field(default_factory=list)
    miou: Optional[float] = None
    mae_m: Optional[float] = None
    data: str = "Target"
    iou_pooling: str = "per-tile"

    def to_dict(self) -> dict:
        return {
            "method": self.method_label,
            "data": self.data,
            "miou": self.miou,
            "mae_m": self.mae_m,
            "iou_pooling": self.iou_pooling,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            d["method"],
            [EvalRecord(r["tile_id"], r.get("iou"), r.get("mae_m")) for r in d.get("records", [])],
            d.get("miou"),
            d.get("mae_m"),
            d.get("data", "Target"),
            d.get("iou_pooling", "per-tile"),
        )


def _mean(values):
    # fsum keeps the mean independent of record order
    return math.fsum(values) / len(values) if values else None


def aggregate(records: Sequence[EvalRecord], label: str, data: str = "Target") -> EvalReport:
    if not records:
        raise ValueError("cannot aggregate an empty record list")
    records = sorted(records, key=lambda r: r.tile_id)
    return EvalReport(
        label,
        list(records),
        miou=_mean([r.iou for r in records if r.iou is not None]),
        mae_m=_mean([r.mae_m for r in records if r.mae_m is not None]),
        data=data,
    )


def pooled_iou(pairs) -> float:
    """Dataset-level IoU from summed intersections and unions."""
    inter = union = 0
    for pred, gt in pairs:
        i, u = iou_counts(pred, gt)
        inter += i
        union += u
    return 1.0 if union == 0 else inter / union


# -- tables -------------------------------------------------------------------

def _fmt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.{DECIMALS}f}"


def _ranks(values, higher_is_better):
    """Per-row mark: 1 best, 2 second best, 0 otherwise (on rounded values)."""
    present = sorted(
        {round(v, DECIMALS) for v in values if v is not None},
        reverse=higher_is_better,
    )
    marks = []
    for v in values:
        if v is None:
            marks.append(0)
            continue
        r = round(v, DECIMALS)
        marks.append(1 if r == present[0] else 2 if len(present) > 1 and r == present[1] else 0)
    return marks


def _decorate(text, mark):
    if mark == 1:
        return f"**{text}**"
    if mark == 2:
        return f"<u>{text}</u>"
    return text


def render_table(reports: Sequence[EvalReport], fmt: str = "markdown") -> str:
    """One row per report: Data, Method, mIoU, MAE(m).

    In markdown, the best value in each column is bold and the runner-up
    underlined. Rows with ``data == "Source"`` are reference rows: they are
    listed first and never ranked.
    """
    reports = list(reports)
    if fmt == "json":
        return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Data", "Method", "mIoU", "MAE(m)"])
        for r in reports:
            w.writerow([r.data, r.method_label, _fmt(r.miou), _fmt(r.mae_m)])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown table format {fmt!r}")

    ref_rows = [r for r in reports if r.data == "Source"]
    rows = [r for r in reports if r.data != "Source"]
    iou_marks = _ranks([r.miou for r in rows], higher_is_better=True)
    mae_marks = _ranks([r.mae_m for r in rows], higher_is_better=False)
    lines = ["| Data | Method | mIoU | MAE(m) |", "|---|---|---|---|"]
    for r in ref_rows:
        lines.append(f"| {r.data} | {r.method_label} | {_fmt(r.miou)} | {_fmt(r.mae_m)} |")
    for r, mi, mm in zip(rows, iou_marks, mae_marks):
        lines.append(
            f"| {r.data} | {r.method_label} | {_decorate(_fmt(r.miou), mi)} | {_decorate(_fmt(r.mae_m), mm)} |"
        )
    return "\n".join(lines) + "\n"
