"""Stand up a real backend for the viewer's end-to-end checks.

Trains tiny checkpoints on phantoms, writes one phantom study to disk, starts
the prediction service on a free port, prints a single JSON line with the
URL + study directory, then waits until stdin closes.
"""
import json
import sys
import tempfile
import threading
from pathlib import Path

from gliopipe.models import UNet7
from gliopipe.phantom import generate_phantom, generate_phantom_dataset
from gliopipe.preproc import CropMode, CropSpec
from gliopipe.server import ModelBundle, make_server
from gliopipe.tensor import LrSchedule
from gliopipe.trainer import TrainConfig, train_classifier, train_segmentation
from gliopipe.volio import write_nifti

DIMS = (16, 16, 16)


def main():
    cases = generate_phantom_dataset(4, dims=DIMS, seed=90)
    seg = train_segmentation(cases, TrainConfig(
        task="segmentation", epochs=2, seed=1, split=(1.0, 0.0),
        lr_schedule=LrSchedule(((0, 1e-3),)),
        crop=CropSpec(size=DIMS, mode=CropMode.FOREGROUND), base_filters=2))
    cls = train_classifier(cases, TrainConfig(
        task="classification", epochs=1, seed=2, folds=2,
        lr_schedule=LrSchedule(((0, 1e-3),)),
        base_filters=2, blocks_per_stage=(1,), cls_input_size=(8, 16, 16)))
    bundle = ModelBundle(
        seg_model=UNet7.from_bytes(seg.best_checkpoint),
        seg_channels=["T1", "T1CE", "T2", "FLAIR"],
        seg_window=DIMS,
        cls_models=cls.models,
        ensemble=cls.ensemble,
    )

    study_dir = Path(tempfile.mkdtemp(prefix="gliopipe-e2e-"))
    study = generate_phantom(91, dims=DIMS)
    for m, v in study.volumes.items():
        (study_dir / f"{m.lower()}.nii").write_bytes(write_nifti(v))
    (study_dir / "seg.nii").write_bytes(write_nifti(study.labels))

    httpd, store = make_server(bundle, port=0, workers=1)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    print(json.dumps({
        "url": f"http://127.0.0.1:{httpd.server_address[1]}",
        "study_dir": str(study_dir),
    }), flush=True)

    sys.stdin.read()  # parent closes stdin to stop us
    httpd.shutdown()
    store.stop()
    httpd.server_close()


if __name__ == "__main__":
    main()
