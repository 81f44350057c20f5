#!/usr/bin/env python
"""Adapt one manifest with every transform and summarize how far each moves
the target tiles toward the source pool's color statistics.

    python scripts/compare_methods.py runs/synth/manifest.json --out runs/compare

Writes one adapted directory per method, a panel for the first tile, and a
JSON summary (acceptance counts, mean retention, distance of the adapted
channel means/stds to the source pool).
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from tileuda.entropy import MatchConfig
from tileuda.pipeline import (
    RunConfig,
    dataset_stats,
    load_manifest,
    panel_variants,
    render_panel,
    run_adaptation,
    save_panel,
)
from tileuda.raster import load_raster
from tileuda.transforms import TransformSpec


def methods(beta):
    return {
        "None": TransformSpec("none"),
        "HM": TransformSpec("hm"),
        "LAB-HM": TransformSpec("lab-hm"),
        "FDA": TransformSpec("fda", beta=beta),
        "PDA": TransformSpec("pda"),
    }


def color_moments(paths):
    pix = np.concatenate([load_raster(p).values.reshape(-1, 3) for p in paths])
    return pix.mean(axis=0), pix.std(axis=0)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--workers", default="auto")
    # floor(beta * size) must reach 1 before FDA changes anything; 0.01 needs >= 100 px tiles
    p.add_argument("--beta", type=float, default=0.01)
    args = p.parse_args()

    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    src_mean, src_std = color_moments([s.image for s in manifest.source_pool])
    base = RunConfig(match=MatchConfig(seed=args.seed, retention_threshold=args.tau), workers=args.workers)

    summary = {"pool": dataset_stats(manifest)["source"], "methods": {}}
    first = manifest.target_tiles[0]
    variants = []
    for label, spec in methods(args.beta).items():
        run_dir = out / label
        s = run_adaptation(manifest, replace(base, transform=spec), run_dir)
        recs = [json.loads(l) for l in (run_dir / "records.jsonl").read_text().splitlines()]
        tiles = sorted(run_dir.glob("*.png"))
        mean, std = color_moments(tiles)
        summary["methods"][label] = {
            "accepted": s["accepted"],
            "fallback": s["fallback"],
            "mean_retention": float(np.mean([r["retention"] for r in recs])),
            "mean_gap": float(np.abs(mean - src_mean).max()),
            "std_gap": float(np.abs(std - src_std).max()),
        }
        variants.append((label, run_dir / f"{first.image.stem}.png"))

    save_panel(render_panel(panel_variants(first.tile_id, manifest, variants)), out / "panel.png")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary["methods"], indent=2))


if __name__ == "__main__":
    main()
