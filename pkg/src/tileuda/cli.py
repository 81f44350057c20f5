"""Command-line entry point: ``tileuda adapt|match|split|eval|panel|stats``."""

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import pipeline
from .metrics import render_table
from .pipeline import EXIT_FATAL, EXIT_OK, EXIT_PARTIAL

log = logging.getLogger("tileuda")


def _config(args):
    cfg = pipeline.load_config(args.config)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers if args.workers == "auto" else int(args.workers))
    if getattr(args, "global_reference", None):
        cfg = replace(cfg, global_reference=args.global_reference)
    return cfg


def cmd_adapt(args):
    manifest = pipeline.load_manifest(args.manifest)
    summary = pipeline.run_adaptation(manifest, _config(args), args.out)
    log.info("%d tiles adapted (%d accepted, %d fallback, %d failed)",
             summary["n_records"], summary["accepted"], summary["fallback"], len(summary["failures"]))
    return summary["exit_code"]


def cmd_match(args):
    manifest = pipeline.load_manifest(args.manifest)
    code = EXIT_OK
    for rec in pipeline.match_records(manifest, _config(args)):
        if "error" in rec:
            code = EXIT_PARTIAL
        sys.stdout.write(json.dumps(rec, sort_keys=True) + "\n")
    return code


def cmd_split(args):
    manifest = pipeline.load_manifest(args.manifest)
    split = pipeline.split_dataset(manifest, args.ratio, args.seed)
    split.save(args.out)
    log.info("split %d train / %d test -> %s", len(split.train_ids), len(split.test_ids), args.out)
    return EXIT_OK


def cmd_eval(args):
    manifest = pipeline.load_manifest(args.manifest)
    labels = args.label or []
    if len(labels) != len(args.pred):
        if len(args.pred) == 1 and not labels:
            labels = ["Target"]
        else:
            raise ValueError("give one --label per --pred")
    test_ids = pipeline.SplitSpec.load(args.split).test_ids if args.split else None
    opts = pipeline.EvalOptions(args.threshold, test_ids, args.mask_to_canopy, args.pooled_iou)
    reports = [pipeline.evaluate_run(p, manifest, lab, opts) for p, lab in zip(args.pred, labels)]
    text = render_table(reports, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_panel(args):
    manifest = pipeline.load_manifest(args.manifest)
    variants = []
    for spec in args.variant:
        label, sep, path = spec.partition("=")
        if not sep:
            raise ValueError(f"--variant expects LABEL=PATH, got {spec!r}")
        variants.append((label, path))
    rasters = pipeline.panel_variants(args.tile, manifest, variants, args.with_target)
    pipeline.save_panel(pipeline.render_panel(rasters), args.out)
    return EXIT_OK


def cmd_stats(args):
    manifest = pipeline.load_manifest(args.manifest)
    sys.stdout.write(json.dumps(pipeline.dataset_stats(manifest), indent=2) + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tileuda", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("adapt", help="adapt target tiles toward the source pool")
    a.add_argument("--manifest", required=True)
    a.add_argument("--config")
    a.add_argument("--out", required=True)
    a.add_argument("--workers")
    a.add_argument("--global-reference")
    a.set_defaults(func=cmd_adapt)

    m = sub.add_parser("match", help="dry-run reference matching, JSON lines to stdout")
    m.add_argument("--manifest", required=True)
    m.add_argument("--config")
    m.add_argument("--workers")
    m.add_argument("--global-reference")
    m.set_defaults(func=cmd_match)

    s = sub.add_parser("split", help="seeded train/test split of the target tiles")
    s.add_argument("--manifest", required=True)
    s.add_argument("--ratio", type=float, default=0.8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    e = sub.add_parser("eval", help="score prediction rasters against ground truth")
    e.add_argument("--pred", action="append", required=True, help="prediction dir (repeatable)")
    e.add_argument("--manifest", required=True)
    e.add_argument("--label", action="append", help="method label per --pred")
    e.add_argument("--format", choices=["markdown", "csv", "json"], default="markdown")
    e.add_argument("--split", help="split.json; restricts scoring to its test ids")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--mask-to-canopy", action="store_true")
    e.add_argument("--pooled-iou", action="store_true", help="dataset-level IoU instead of per-tile mean")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    pn = sub.add_parser("panel", help="side-by-side comparison image")
    pn.add_argument("--tile", required=True)
    pn.add_argument("--manifest", required=True)
    pn.add_argument("--variant", action="append", required=True, metavar="LABEL=PATH")
    pn.add_argument("--with-target", action="store_true")
    pn.add_argument("--out", required=True)
    pn.set_defaults(func=cmd_panel)

    st = sub.add_parser("stats", help="per-domain entropy and color statistics")
    st.add_argument("--manifest", required=True)
    st.set_defaults(func=cmd_stats)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except pipeline.MissingPredictionsError as exc:
        for tid in exc.missing:
            print(f"missing prediction: {tid}", file=sys.stderr)
        return EXIT_FATAL
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
