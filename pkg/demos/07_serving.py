"""Prediction service walkthrough: train tiny checkpoints, start the HTTP
server in-process, submit a study, poll the job, and fetch results.

Run: python demos/07_serving.py
"""
import io
import json
import threading
import time
import urllib.request
import uuid

from gliopipe.models import UNet7
from gliopipe.phantom import generate_phantom, generate_phantom_dataset
from gliopipe.preproc import CropMode, CropSpec
from gliopipe.server import ModelBundle, make_server
from gliopipe.tensor import LrSchedule
from gliopipe.trainer import TrainConfig, train_classifier, train_segmentation
from gliopipe.volio import write_nifti

DIMS = (16, 16, 16)


def multipart(parts):
    boundary = uuid.uuid4().hex
    out = io.BytesIO()
    for name, filename, data in parts:
        out.write(f'--{boundary}\r\nContent-Disposition: form-data; name="{name}"'.encode())
        out.write(f'; filename="{filename}"\r\n\r\n'.encode() if filename else b"\r\n\r\n")
        out.write(data + b"\r\n")
    out.write(f"--{boundary}--\r\n".encode())
    return out.getvalue(), f"multipart/form-data; boundary={boundary}"


print("training tiny checkpoints on phantoms...")
cases = generate_phantom_dataset(4, dims=DIMS, seed=9)
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
httpd, store = make_server(bundle, port=0, workers=1)
threading.Thread(target=httpd.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{httpd.server_address[1]}"
print(f"service up at {base}")

study = generate_phantom(99, dims=DIMS)
parts = [(m.lower(), f"{m.lower()}.nii", write_nifti(v)) for m, v in study.volumes.items()]
body, ctype = multipart(parts)
req = urllib.request.Request(f"{base}/api/v1/segment", data=body, headers={"Content-Type": ctype})
job = json.loads(urllib.request.urlopen(req).read())
print("submitted segmentation job:", job["job_id"])

while True:
    doc = json.loads(urllib.request.urlopen(f"{base}/api/v1/jobs/{job['job_id']}").read())
    if doc["status"] in ("done", "failed"):
        break
    time.sleep(0.2)
print("status:", doc["status"])
print("region volumes (mm^3):", doc["result"]["region_volumes_mm3"])

png = urllib.request.urlopen(
    f"{base}/api/v1/jobs/{job['job_id']}/slices/axial/8?overlay=1&alpha=0.5").read()
print(f"axial slice with overlay: {len(png)}-byte PNG")

body, ctype = multipart([("job_id", None, job["job_id"].encode()),
                         ("truth", "seg.nii", write_nifti(study.labels))])
req = urllib.request.Request(f"{base}/api/v1/compare", data=body, headers={"Content-Type": ctype})
cmp_doc = json.loads(urllib.request.urlopen(req).read())
print("Dice vs ground truth:", cmp_doc["dice"])

httpd.shutdown()
store.stop()
httpd.server_close()
print("service stopped")
