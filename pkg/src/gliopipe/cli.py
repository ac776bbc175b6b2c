"""Command-line interface.

Subcommands: convert, phantom, train-seg, train-cls, evaluate, predict,
serve. Prediction goes through exactly the same functions as the HTTP
service. Operational failures exit 1 with a diagnostic naming the offending
input; argparse usage errors exit 2.
"""
from __future__ import annotations

import argparse
import gzip
import json
import os
import sys
from pathlib import Path

from .cases import load_manifest, write_dataset
from .errors import GliopipeError
from .phantom import generate_phantom_dataset
from .predict import methylation_case, segment_case
from .preproc import MODALITIES
from .server import ModelBundle, load_model_dir, serve_forever
from .trainer import (
    evaluate_classifier,
    evaluate_segmentation,
    load_config,
    train_classifier,
    train_segmentation,
)
from .volio import canonicalize, read_dicom_series, read_nifti, write_nifti

DEFAULT_MODEL_DIR = os.environ.get("GLIOPIPE_MODEL_DIR", "models")


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.replace("x", ",").split(",") if p]
    if len(parts) == 1:
        return (parts[0], parts[0], parts[0])
    if len(parts) == 3:
        return tuple(parts)  # type: ignore[return-value]
    raise argparse.ArgumentTypeError("dims must be N or NX,NY,NZ")


def cmd_convert(args) -> int:
    src = Path(args.dicom_dir)
    files = sorted(p for p in src.iterdir() if p.is_file())
    if not files:
        print(f"error: no files in {src}", file=sys.stderr)
        return 1
    volume = canonicalize(read_dicom_series([p.read_bytes() for p in files]))
    payload = write_nifti(volume)
    out = Path(args.out)
    if out.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    out.write_bytes(payload)
    print(f"wrote {out} dims={volume.dims} spacing={tuple(round(s, 4) for s in volume.spacing)}")
    return 0


def cmd_phantom(args) -> int:
    cases = generate_phantom_dataset(args.count, dims=args.dims, seed=args.seed)
    manifest = write_dataset(Path(args.out), cases)
    print(f"wrote {args.count} phantom cases under {args.out} (manifest: {manifest})")
    return 0


def cmd_train_seg(args) -> int:
    cfg = load_config(args.config)
    cases = load_manifest(args.manifest)
    result = train_segmentation(cases, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "segmentation.gpck").write_bytes(result.best_checkpoint)
    (out / "history.json").write_text(json.dumps(result.history, indent=2) + "\n")
    last = result.history[-1] if result.history else {}
    print(f"trained {len(result.history)} epochs; best metric {result.best_metric:.4f}; "
          f"final train dice {last.get('train_dice')}")
    print(f"checkpoint: {out / 'segmentation.gpck'}")
    return 0


def cmd_train_cls(args) -> int:
    cfg = load_config(args.config)
    cases = load_manifest(args.manifest)
    result = train_classifier(cases, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (fold, modality), model in result.models.items():
        payload = model.to_bytes(extra={
            "fold": fold,
            "modality": modality,
            "slice_window": [cfg.slice_window.lo, cfg.slice_window.hi],
        })
        (out / f"classifier_f{fold}_{modality.lower()}.gpck").write_bytes(payload)
    (out / "ensemble.txt").write_text(result.ensemble.to_text())
    report = {
        "oof_auroc": {f"fold{f}:{m}": v for (f, m), v in result.oof_auroc.items()},
        "per_modality_auroc": result.per_modality_auroc,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"trained {len(result.models)} fold-modality models; "
          f"ensemble weights: {len(result.ensemble.weights)}")
    for m, v in result.per_modality_auroc.items():
        print(f"  {m:<5} out-of-fold AUROC {v:.3f}")
    return 0


def cmd_evaluate(args) -> int:
    cases = load_manifest(args.manifest)
    bundle = load_model_dir(Path(args.model_dir))
    if args.task == "segmentation":
        if not bundle.can_segment:
            print(f"error: no segmentation.gpck under {args.model_dir}", file=sys.stderr)
            return 1
        cfg = load_config(args.config)
        report = evaluate_segmentation(bundle.seg_model, cases, cfg, region_source=args.region_source)
        for region, value in report["mean_dice"].items():
            print(f"mean Dice {region:<12} {value:.4f}")
    else:
        if not bundle.can_classify:
            print(f"error: no classifier checkpoints under {args.model_dir}", file=sys.stderr)
            return 1
        report = evaluate_classifier(bundle.cls_models, bundle.ensemble, cases, bundle.slice_window)
        if "auroc" in report:
            print(f"AUROC {report['auroc']:.4f}  accuracy@0.5 {report['accuracy']:.4f}")
            for m, v in report.get("per_modality_auroc", {}).items():
                print(f"  {m:<5} AUROC {v:.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, default=float) + "\n")
        print(f"report: {args.out}")
    return 0


def _load_upload(path: str):
    return canonicalize(read_nifti(Path(path).read_bytes()))


def cmd_predict(args) -> int:
    bundle = load_model_dir(Path(args.model_dir))
    volumes = {}
    for modality in MODALITIES:
        path = getattr(args, modality.lower(), None)
        if path:
            volumes[modality] = _load_upload(path)
    if not volumes:
        print("error: no modality files given (--t1/--t1ce/--t2/--flair)", file=sys.stderr)
        return 1
    if args.task == "segmentation":
        if not bundle.can_segment:
            print(f"error: no segmentation.gpck under {args.model_dir}", file=sys.stderr)
            return 1
        res = segment_case(bundle.seg_model, volumes, bundle.seg_channels,
                           bundle.seg_normalization, bundle.region_source,
                           window=bundle.seg_window)
        for region in res.region_voxels:
            print(f"{region:<4} {res.region_voxels[region]:>9} voxels  "
                  f"{res.region_volumes_mm3[region]:>12.1f} mm3")
        if args.out:
            Path(args.out).write_bytes(write_nifti(res.mask))
            print(f"mask: {args.out}")
    else:
        if not bundle.can_classify:
            print(f"error: no classifier checkpoints under {args.model_dir}", file=sys.stderr)
            return 1
        pred = methylation_case(bundle.cls_models, bundle.ensemble, volumes, bundle.slice_window)
        print(f"methylation probability {pred.probability:.4f}  status {pred.status_bit}")
        for m, info in pred.per_modality.items():
            flag = " (imputed)" if info["imputed"] else ""
            print(f"  {m:<5} {info['probability']:.4f}{flag}")
        if args.out:
            Path(args.out).write_text(json.dumps(pred.to_dict(), indent=2) + "\n")
    return 0


def cmd_serve(args) -> int:
    bundle = load_model_dir(Path(args.model_dir)) if Path(args.model_dir).exists() else ModelBundle()
    serve_forever(
        bundle,
        host=args.host,
        port=args.port,
        workers=args.workers,
        results_dir=Path(args.results_dir) if args.results_dir else None,
        ui_dir=Path(args.ui_dir) if args.ui_dir else None,
        quiet=False,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gliopipe",
                                     description="Brain MRI segmentation and MGMT methylation prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="DICOM series directory to NIfTI")
    p.add_argument("dicom_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("phantom", help="generate synthetic cases + manifest")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--dims", type=_parse_dims, default=(64, 64, 64))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_phantom)

    p = sub.add_parser("train-seg", help="train the segmentation model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_seg)

    p = sub.add_parser("train-cls", help="train the fold-modality classifiers + ensemble")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_cls)

    p = sub.add_parser("evaluate", help="evaluate checkpoints against a labeled manifest")
    p.add_argument("--task", choices=["segmentation", "methylation"], required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-dir", default=DEFAULT_MODEL_DIR)
    p.add_argument("--config", help="training config (segmentation evaluation)")
    p.add_argument("--region-source", choices=["paper", "standard", "both"], default=None)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("predict", help="run one case through the loaded checkpoints")
    p.add_argument("--task", choices=["segmentation", "methylation"], required=True)
    p.add_argument("--model-dir", default=DEFAULT_MODEL_DIR)
    for modality in MODALITIES:
        p.add_argument(f"--{modality.lower()}", help=f"{modality} NIfTI file")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("serve", help="start the prediction service")
    p.add_argument("--model-dir", default=DEFAULT_MODEL_DIR)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8780)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--results-dir")
    p.add_argument("--ui-dir")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except GliopipeError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
