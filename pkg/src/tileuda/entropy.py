"""Shannon entropy of tiles and the randomized, entropy-gated reference search.

For each target tile, source tiles are drawn in a seeded random order and
the target is transformed against each. The first candidate whose
transformed image keeps at least ``retention_threshold`` of the target's
entropy is accepted; otherwise the best candidate seen is returned as a
fallback.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .raster import Histogram, Raster, RasterError, channel_histogram
from .transforms import TransformSpec, apply_transform


class MatchError(RuntimeError):
    """A transform failed for a specific candidate reference."""

    def __init__(self, candidate_id, cause):
        super().__init__(f"transform failed against reference {candidate_id!r}: {cause}")
        self.candidate_id = candidate_id


@dataclass(frozen=True)
class MatchConfig:
    max_attempts: int = 25
    retention_threshold: float = 0.9
    seed: int = 0
    sample_without_replacement: bool = True

    def __post_init__(self):
        if int(self.max_attempts) < 1:
            raise ValueError("max_attempts must be >= 1")
        if not 0.0 <= float(self.retention_threshold) <= 1.0:
            raise ValueError("retention_threshold must be in [0, 1]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class MatchResult:
    reference_id: str
    attempts: int
    entropy_target: float
    entropy_transformed: float
    retention: float
    accepted: bool

    def to_dict(self) -> dict:
        return asdict(self)


def shannon_entropy(hist: Histogram) -> float:
    """Entropy in bits of a 256-bin histogram; empty bins contribute nothing."""
    total = hist.total
    if total <= 0:
        raise RasterError("entropy of an empty histogram is undefined")
    counts = hist.bins[hist.bins > 0]
    p = counts / total
    return float(max(0.0, -np.sum(p * np.log2(p))))


def image_entropy(raster: Raster) -> float:
    """Mean of the per-channel entropies."""
    return float(np.mean([shannon_entropy(channel_histogram(raster, c)) for c in range(raster.channels)]))


def stable_hash(seed: int, key: str) -> int:
    """64-bit hash of ``(seed, key)`` that is stable across processes and runs."""
    h = hashlib.blake2b(f"{int(seed)}\x00{key}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def candidate_order(n: int, cfg: MatchConfig, target_id: str = "") -> np.ndarray:
    """Pool indices to try, in order, for one target."""
    rng = np.random.default_rng(stable_hash(cfg.seed, target_id))
    if cfg.sample_without_replacement:
        return rng.permutation(n)[: cfg.max_attempts]
    return rng.integers(0, n, size=cfg.max_attempts)


def retention_ratio(entropy_before: float, entropy_after: float) -> float:
    if entropy_before == 0.0:
        return 1.0
    return entropy_after / entropy_before


def select_reference(
    target: Raster,
    pool: Sequence[Tuple[str, Raster]],
    transform: TransformSpec,
    cfg: MatchConfig = MatchConfig(),
    target_id: Optional[str] = None,
) -> Tuple[MatchResult, Raster]:
    """Pick a source reference for ``target`` and return the transformed tile.

    ``target_id`` keys the per-target random stream; it defaults to
    ``target.tile_id``.
    """
    if len(pool) == 0:
        raise ValueError("reference pool is empty")
    if target_id is None:
        target_id = target.tile_id or ""
    h_target = image_entropy(target)
    best = None
    attempts = 0
    for idx in candidate_order(len(pool), cfg, target_id):
        cand_id, cand = pool[int(idx)]
        attempts += 1
        try:
            out = apply_transform(transform, target, cand)
        except Exception as exc:
            raise MatchError(cand_id, exc) from exc
        h_out = image_entropy(out)
        r = retention_ratio(h_target, h_out)
        if best is None or r > best[0]:
            best = (r, cand_id, h_out, out)
        if r >= cfg.retention_threshold:
            return MatchResult(cand_id, attempts, h_target, h_out, r, True), out
    r, cand_id, h_out, out = best
    return MatchResult(cand_id, attempts, h_target, h_out, r, False), out


def match_with(
    target: Raster,
    reference_id: str,
    reference: Raster,
    transform: TransformSpec,
    cfg: MatchConfig = MatchConfig(),
) -> Tuple[MatchResult, Raster]:
    """Score a fixed reference (the global-reference mode) with the same gate."""
    h_target = image_entropy(target)
    try:
        out = apply_transform(transform, target, reference)
    except Exception as exc:
        raise MatchError(reference_id, exc) from exc
    h_out = image_entropy(out)
    r = retention_ratio(h_target, h_out)
    return MatchResult(reference_id, 1, h_target, h_out, r, r >= cfg.retention_threshold), out


def select_references(
    targets: Sequence[Tuple[str, Raster]],
    pool: Sequence[Tuple[str, Raster]],
    transform: TransformSpec,
    cfg: MatchConfig = MatchConfig(),
    workers: int = 1,
):
    """Run :func:`select_reference` over many targets; results keep input order."""
    def one(item):
        tid, raster = item
        return select_reference(raster, pool, transform, cfg, target_id=tid)

    if workers <= 1:
        return [one(t) for t in targets]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(one, targets))
