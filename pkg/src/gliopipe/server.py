"""Single-node prediction service over the standard library HTTP server.

Jobs are asynchronous: uploads return a job id immediately and a bounded
worker pool runs inference (3D forward passes take seconds to minutes), so
clients poll GET /api/v1/jobs/{id}. The checkpoint bundle is loaded once and
shared read-only across workers. No framework dependency: multipart parsing
and routing are small and self-contained.

Endpoints (v1): POST /api/v1/segment, POST /api/v1/methylation,
GET /api/v1/jobs/{id}, GET /api/v1/jobs/{id}/mask,
GET /api/v1/jobs/{id}/slices/{axis}/{index}, POST /api/v1/compare,
GET /api/v1/health. Optional static hosting of the viewer UI.
"""
from __future__ import annotations

import io
import json
import queue
import re
import threading
import uuid
import zipfile
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

import numpy as np

from .errors import (
    DimMismatch,
    GliopipeError,
    IllegalLabel,
    MissingModality,
    NoModalities,
)
from .lossmetric import LabelScheme, region_dice
from .models import EnsembleModel, ResClassifier3D, UNet7
from .predict import methylation_case, segment_case
from .preproc import MODALITIES, NormVariant, SliceWindow
from .render import AXES, axis_length, slice_png
from .volio import Volume3D, canonicalize, read_dicom_series, read_nifti, write_nifti

MODALITY_ALIASES = {
    "t1": "T1", "t1w": "T1",
    "t1ce": "T1CE", "t1gd": "T1CE", "t1wce": "T1CE",
    "t2": "T2", "t2w": "T2",
    "flair": "FLAIR",
}


# ---------------------------------------------------------------------------
# model bundle
# ---------------------------------------------------------------------------

@dataclass
class ModelBundle:
    seg_model: Optional[UNet7] = None
    seg_channels: list[str] = field(default_factory=list)
    seg_normalization: NormVariant = NormVariant.MINMAX_STANDARD
    seg_window: Optional[tuple[int, int, int]] = None  # training crop size
    region_source: str = "paper"
    cls_models: dict = field(default_factory=dict)  # (fold, modality) -> ResClassifier3D
    ensemble: Optional[EnsembleModel] = None
    slice_window: SliceWindow = SliceWindow(0.25, 0.75)

    @property
    def can_segment(self) -> bool:
        return self.seg_model is not None

    @property
    def can_classify(self) -> bool:
        return bool(self.cls_models) and self.ensemble is not None


def load_model_dir(model_dir: Path) -> ModelBundle:
    """Load whatever checkpoints exist under the model directory.

    Layout: segmentation.gpck, classifier_f{fold}_{modality}.gpck (metadata is
    read from the checkpoint descriptor, not the filename), ensemble.txt.
    """
    model_dir = Path(model_dir)
    bundle = ModelBundle()
    seg_path = model_dir / "segmentation.gpck"
    if seg_path.exists():
        payload = seg_path.read_bytes()
        bundle.seg_model = UNet7.from_bytes(payload)
        from .tensor.checkpoint import parse_checkpoint

        desc, _ = parse_checkpoint(payload)
        bundle.seg_channels = list(desc.get("channels", list(MODALITIES)))
        bundle.seg_normalization = NormVariant(desc.get("normalization", "minmax_standard"))
        bundle.region_source = desc.get("region_source", "paper")
        if desc.get("crop_size"):
            bundle.seg_window = tuple(int(c) for c in desc["crop_size"])
    for path in sorted(model_dir.glob("classifier_*.gpck")):
        model, desc = ResClassifier3D.from_bytes(path.read_bytes())
        fold = int(desc["fold"])
        modality = str(desc["modality"])
        bundle.cls_models[(fold, modality)] = model
        if "slice_window" in desc:
            lo, hi = desc["slice_window"]
            bundle.slice_window = SliceWindow(float(lo), float(hi))
    ensemble_path = model_dir / "ensemble.txt"
    if ensemble_path.exists():
        bundle.ensemble = EnsembleModel.from_text(ensemble_path.read_text())
    return bundle


# ---------------------------------------------------------------------------
# jobs
# ---------------------------------------------------------------------------

@dataclass
class Job:
    job_id: str
    kind: str  # "segmentation" | "methylation"
    status: str = "pending"  # pending -> running -> done | failed
    error: Optional[dict] = None
    volumes: dict = field(default_factory=dict)  # modality -> Volume3D (canonical)
    result: Optional[dict] = None
    mask: Optional[Volume3D] = None

    def public(self) -> dict:
        doc = {"job_id": self.job_id, "kind": self.kind, "status": self.status}
        if self.error:
            doc["error"] = self.error
        if self.status == "done" and self.result is not None:
            doc["result"] = self.result
        return doc


class JobStore:
    """In-memory job registry plus a bounded worker pool."""

    def __init__(self, bundle: ModelBundle, workers: int = 1, results_dir: Optional[Path] = None):
        self.bundle = bundle
        self.results_dir = Path(results_dir) if results_dir else None
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._queue: "queue.Queue[Optional[str]]" = queue.Queue()
        self._threads = [
            threading.Thread(target=self._worker, name=f"gliopipe-worker-{i}", daemon=True)
            for i in range(max(1, workers))
        ]
        for t in self._threads:
            t.start()

    def submit(self, kind: str, volumes: dict) -> Job:
        job = Job(job_id=uuid.uuid4().hex, kind=kind, volumes=volumes)
        with self._lock:
            self._jobs[job.job_id] = job
        self._queue.put(job.job_id)
        return job

    def get(self, job_id: str) -> Optional[Job]:
        with self._lock:
            return self._jobs.get(job_id)

    def stop(self):
        for _ in self._threads:
            self._queue.put(None)
        for t in self._threads:
            t.join(timeout=5)

    def _worker(self):
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            job = self.get(job_id)
            if job is None:
                continue
            job.status = "running"
            try:
                self._run(job)
                job.status = "done"
            except GliopipeError as e:
                job.error = {"code": type(e).__name__, "message": str(e)}
                job.status = "failed"
            except Exception as e:  # keep the worker alive
                job.error = {"code": "InternalError", "message": str(e)}
                job.status = "failed"

    def _run(self, job: Job):
        if job.kind == "segmentation":
            res = segment_case(
                self.bundle.seg_model,
                job.volumes,
                self.bundle.seg_channels,
                self.bundle.seg_normalization,
                self.bundle.region_source,
                window=self.bundle.seg_window,
            )
            job.mask = res.mask
            job.result = {
                "dims": list(res.mask.dims),
                "spacing": list(res.mask.spacing),
                "label_values": sorted(int(v) for v in np.unique(res.mask.data)),
                "region_voxels": res.region_voxels,
                "region_volumes_mm3": res.region_volumes_mm3,
                "mask_url": f"/api/v1/jobs/{job.job_id}/mask",
            }
            if self.results_dir:
                self.results_dir.mkdir(parents=True, exist_ok=True)
                (self.results_dir / f"{job.job_id}_mask.nii").write_bytes(write_nifti(res.mask))
        else:
            pred = methylation_case(
                self.bundle.cls_models, self.bundle.ensemble, job.volumes, self.bundle.slice_window
            )
            job.result = pred.to_dict()


# ---------------------------------------------------------------------------
# multipart parsing
# ---------------------------------------------------------------------------

_DISPOSITION_RE = re.compile(rb'name="([^"]*)"(?:;\s*filename="([^"]*)")?')


def parse_multipart(body: bytes, content_type: str) -> list[dict]:
    m = re.search(r'boundary="?([^";]+)"?', content_type)
    if not m:
        raise ValueError("missing multipart boundary")
    delim = b"--" + m.group(1).encode("ascii")
    parts = []
    for chunk in body.split(delim)[1:]:
        if chunk[:2] == b"--":  # closing delimiter
            break
        chunk = chunk.lstrip(b"\r\n")
        head, _, payload = chunk.partition(b"\r\n\r\n")
        if payload.endswith(b"\r\n"):
            payload = payload[:-2]
        dm = _DISPOSITION_RE.search(head)
        if not dm:
            continue
        parts.append({
            "name": dm.group(1).decode("utf-8", "replace"),
            "filename": (dm.group(2) or b"").decode("utf-8", "replace") or None,
            "data": payload,
        })
    return parts


def sniff_volume(data: bytes) -> Volume3D:
    """NIfTI (.nii / .nii.gz), a zip of one DICOM series, or one DICOM file."""
    if data[:4] == b"PK\x03\x04":
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            blobs = [zf.read(n) for n in sorted(zf.namelist()) if not n.endswith("/")]
        return canonicalize(read_dicom_series(blobs))
    if len(data) > 132 and data[128:132] == b"DICM":
        return canonicalize(read_dicom_series([data]))
    return canonicalize(read_nifti(data))


def volumes_from_parts(parts: list[dict]) -> dict[str, Volume3D]:
    volumes: dict[str, Volume3D] = {}
    for part in parts:
        if part["filename"] is None and part["name"] not in MODALITY_ALIASES:
            continue  # plain form field (job_id etc.), handled by the caller
        modality = MODALITY_ALIASES.get(part["name"].lower())
        if modality is None:
            raise MissingModality(f"unrecognized modality field {part['name']!r}")
        volumes[modality] = sniff_volume(part["data"])
    dims = None
    for m, v in volumes.items():
        if dims is None:
            dims = v.dims
        elif v.dims != dims:
            raise DimMismatch(f"{m} dims {v.dims} != {dims}")
    return volumes


# ---------------------------------------------------------------------------
# HTTP handler
# ---------------------------------------------------------------------------

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".png": "image/png",
}


class GliopipeHandler(BaseHTTPRequestHandler):
    store: JobStore
    ui_dir: Optional[Path] = None
    quiet = True
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    # --- helpers ---

    def _json(self, code: int, doc: dict):
        payload = json.dumps(doc).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _bytes(self, code: int, payload: bytes, content_type: str):
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _error(self, code: int, error: str, message: str):
        self._json(code, {"error": error, "message": message})

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def _multipart(self) -> Optional[list[dict]]:
        ctype = self.headers.get("Content-Type", "")
        if not ctype.startswith("multipart/form-data"):
            self._error(400, "UnsupportedFormat", "expected multipart/form-data")
            return None
        try:
            return parse_multipart(self._read_body(), ctype)
        except ValueError as e:
            self._error(400, "UnsupportedFormat", str(e))
            return None

    # --- routing ---

    def do_POST(self):
        path = urlparse(self.path).path.rstrip("/")
        try:
            if path == "/api/v1/segment":
                self._post_analysis("segmentation")
            elif path == "/api/v1/methylation":
                self._post_analysis("methylation")
            elif path == "/api/v1/compare":
                self._post_compare()
            else:
                self._error(404, "NotFound", f"no route {path}")
        except BrokenPipeError:
            pass

    def do_GET(self):
        url = urlparse(self.path)
        path = url.path.rstrip("/") or "/"
        query = parse_qs(url.query)
        try:
            if path == "/api/v1/health":
                self._json(200, {
                    "status": "ok",
                    "segmentation_loaded": self.store.bundle.can_segment,
                    "methylation_loaded": self.store.bundle.can_classify,
                })
                return
            m = re.fullmatch(r"/api/v1/jobs/([0-9a-f]+)", path)
            if m:
                job = self.store.get(m.group(1))
                if job is None:
                    self._error(404, "NotFound", "unknown job")
                else:
                    self._json(200, job.public())
                return
            m = re.fullmatch(r"/api/v1/jobs/([0-9a-f]+)/mask", path)
            if m:
                self._get_mask(m.group(1))
                return
            m = re.fullmatch(r"/api/v1/jobs/([0-9a-f]+)/slices/([a-z]+)/(\d+)", path)
            if m:
                self._get_slice(m.group(1), m.group(2), int(m.group(3)), query)
                return
            if self.ui_dir is not None:
                self._get_static(path)
                return
            self._error(404, "NotFound", f"no route {path}")
        except BrokenPipeError:
            pass

    # --- POST bodies ---

    def _post_analysis(self, kind: str):
        bundle = self.store.bundle
        if kind == "segmentation" and not bundle.can_segment:
            self._error(503, "ModelNotLoaded", "no segmentation checkpoint loaded")
            return
        if kind == "methylation" and not bundle.can_classify:
            self._error(503, "ModelNotLoaded", "no classifier/ensemble checkpoints loaded")
            return
        parts = self._multipart()
        if parts is None:
            return
        try:
            volumes = volumes_from_parts(parts)
        except (DimMismatch, MissingModality) as e:
            self._error(400, type(e).__name__, str(e))
            return
        except GliopipeError as e:
            self._error(400, "UnsupportedFormat", str(e))
            return
        if kind == "segmentation":
            missing = [m for m in bundle.seg_channels if m not in volumes]
            if missing:
                self._error(400, "MissingModality", ", ".join(missing))
                return
        elif not volumes:
            self._error(400, "NoModalities", "no recognizable modality uploaded")
            return
        job = self.store.submit(kind, volumes)
        self._json(202, {"job_id": job.job_id, "status": job.status})

    def _post_compare(self):
        parts = self._multipart()
        if parts is None:
            return
        job_id = None
        truth_bytes = None
        for p in parts:
            if p["name"] == "job_id" and p["filename"] is None:
                job_id = p["data"].decode("utf-8").strip()
            elif p["name"] in ("truth", "ground_truth", "labels"):
                truth_bytes = p["data"]
        if not job_id or truth_bytes is None:
            self._error(400, "UnsupportedFormat", "compare needs job_id and truth parts")
            return
        job = self.store.get(job_id)
        if job is None:
            self._error(404, "NotFound", "unknown job")
            return
        if job.kind != "segmentation" or job.status != "done" or job.mask is None:
            self._error(409, "NotComparable", "job is not a finished segmentation")
            return
        try:
            truth = canonicalize(read_nifti(truth_bytes))
        except GliopipeError as e:
            self._error(400, "UnsupportedFormat", str(e))
            return
        if truth.dims != job.mask.dims:
            self._error(400, "DimMismatch", f"truth {truth.dims} != mask {job.mask.dims}")
            return
        try:
            dice = region_dice(job.mask.data, truth.data, LabelScheme(self.store.bundle.region_source))
        except IllegalLabel as e:
            self._error(400, "IllegalLabel", str(e))
            return
        self._json(200, {"job_id": job_id, "dice": {k.lower(): v for k, v in dice.items()}})

    # --- GET bodies ---

    def _get_mask(self, job_id: str):
        job = self.store.get(job_id)
        if job is None or job.kind != "segmentation" or job.status != "done" or job.mask is None:
            self._error(404, "NotFound", "no mask for this job")
            return
        self._bytes(200, write_nifti(job.mask), "application/octet-stream")

    def _get_slice(self, job_id: str, axis: str, index: int, query: dict):
        job = self.store.get(job_id)
        if job is None or job.status != "done":
            self._error(404, "NotFound", "job unknown or not done")
            return
        if axis not in AXES:
            self._error(404, "NotFound", f"axis must be one of {AXES}")
            return
        channel = query.get("channel", [None])[0]
        if channel is None:
            channel = next(iter(job.volumes))
        alias = MODALITY_ALIASES.get(channel.lower(), channel.upper())
        if alias not in job.volumes:
            self._error(404, "NotFound", f"channel {channel!r} not in this job")
            return
        vol = job.volumes[alias]
        if not 0 <= index < axis_length(vol.dims, axis):
            self._error(404, "NotFound", f"slice {index} out of range")
            return
        overlay = query.get("overlay", ["0"])[0] not in ("0", "false", "")
        alpha = float(query.get("alpha", ["0.5"])[0])
        labels = job.mask.data if (overlay and job.mask is not None) else None
        png = slice_png(vol.data, axis, index, labels=labels, overlay=labels is not None, alpha=alpha)
        self._bytes(200, png, "image/png")

    def _get_static(self, path: str):
        rel = "index.html" if path == "/" else path.lstrip("/")
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            self._error(404, "NotFound", path)
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._bytes(200, target.read_bytes(), ctype)


def make_server(
    bundle: ModelBundle,
    host: str = "127.0.0.1",
    port: int = 0,
    workers: int = 1,
    results_dir: Optional[Path] = None,
    ui_dir: Optional[Path] = None,
    quiet: bool = True,
) -> tuple[ThreadingHTTPServer, JobStore]:
    store = JobStore(bundle, workers=workers, results_dir=results_dir)
    handler = type("BoundHandler", (GliopipeHandler,), {
        "store": store,
        "ui_dir": Path(ui_dir) if ui_dir else None,
        "quiet": quiet,
    })
    httpd = ThreadingHTTPServer((host, port), handler)
    return httpd, store


def serve_forever(bundle: ModelBundle, host: str, port: int, **kwargs):
    httpd, store = make_server(bundle, host, port, **kwargs)
    try:
        print(f"gliopipe service on http://{httpd.server_address[0]}:{httpd.server_address[1]}")
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        store.stop()
        httpd.server_close()
