"""Training command line.

`train-synthetic` runs the desk-scale primitive dataset; `train-segments`
consumes segment xyz files plus an optional correspondence pairs CSV (the
mapping side's gt-gen artifact) and treats each correspondence component as a
training class. Both emit SEGW weights plus a training-log CSV.
"""

from __future__ import annotations

import argparse
import os
import sys

from .datasets import (
    SyntheticObject,
    build_classes,
    read_correspondence_csv,
    segments_from_files,
    synthetic_objects,
)
from .losses import TrainingParams
from .models import SEGMAP_V1, SEGMINI_V1, EncoderSpec, export_model
from .training import train_combined


def _spec(name: str, dropout: float) -> EncoderSpec:
    base = {"segmap-v1": SEGMAP_V1, "segmini-v1": SEGMINI_V1}[name]
    return EncoderSpec(name=base.name, filters=base.filters, fc=base.fc,
                       grid=base.grid, dropout=dropout)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="segtrain")
    p.add_argument("--output-dir", default="weights")
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("train-synthetic", "train-segments"):
        sp = sub.add_parser(name)
        sp.add_argument("--variant", default="segmap-v1",
                        choices=["segmap-v1", "segmini-v1"])
        sp.add_argument("--epochs", type=int, default=50)
        sp.add_argument("--alpha", type=float, default=200.0)
        sp.add_argument("--gamma", type=float, default=0.9)
        sp.add_argument("--learning-rate", type=float, default=1e-4)
        sp.add_argument("--batch-size", type=int, default=24)
        sp.add_argument("--dropout", type=float, default=0.5)
        sp.add_argument("--views-per-object", type=int, default=10)
        if name == "train-synthetic":
            sp.add_argument("--classes", type=int, default=20)
        else:
            sp.add_argument("segments", nargs="+")
            sp.add_argument("--pairs", default=None,
                            help="correspondence CSV from the mapping side")
            sp.add_argument("--min-samples", type=int, default=1)

    args = p.parse_args(argv)
    os.makedirs(args.output_dir, exist_ok=True)

    if args.command == "train-synthetic":
        objects = synthetic_objects(args.classes, seed=args.seed)
    else:
        segments = segments_from_files(args.segments)
        pairs = read_correspondence_csv(args.pairs) if args.pairs else []
        classes = build_classes([sid for sid, _ in segments], pairs,
                                min_samples=args.min_samples)
        objects = [SyntheticObject(class_index=classes[sid], points=pts, kind="segment")
                   for sid, pts in segments if sid in classes]
        if not objects:
            print("error: no trainable segments after class filtering", file=sys.stderr)
            return 2

    n_classes = len({o.class_index for o in objects})
    params = TrainingParams(alpha=args.alpha, gamma=args.gamma,
                            learning_rate=args.learning_rate,
                            batch_size=args.batch_size, epochs=args.epochs,
                            dropout=args.dropout, n_classes=n_classes)
    result = train_combined(objects, params, _spec(args.variant, args.dropout),
                            seed=args.seed, views_per_object=args.views_per_object,
                            log_path=os.path.join(args.output_dir, "training_log.csv"))
    export_model(os.path.join(args.output_dir, f"{args.variant}.segw"), result.encoder)
    if result.decoder is not None and args.variant == "segmap-v1":
        export_model(os.path.join(args.output_dir, "decoder-v1.segw"), result.decoder)
    print(f"trained {len(result.history)} epochs, final accuracy "
          f"{result.final_accuracy:.3f}; weights in {args.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
