"""Entropy-gated, data-based domain adaptation for aerial RGB tiles."""

from .color import lab_to_rgb, rgb_to_lab
from .entropy import MatchConfig, MatchResult, image_entropy, select_reference, shannon_entropy
from .metrics import EvalRecord, EvalReport, aggregate, binarize, iou, mae, render_table
from .raster import (
    BinaryMask,
    HeightMap,
    Histogram,
    Raster,
    channel_histogram,
    downsample_mean,
    load_raster,
    save_raster,
)
from .transforms import (
    PDAMode,
    PixelStats,
    TransformKind,
    TransformSpec,
    apply_transform,
    fda,
    fit_pixel_stats,
    histogram_match,
    lab_histogram_match,
    pda,
)

__version__ = "0.1.0"
