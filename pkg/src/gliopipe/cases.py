"""Case records and the on-disk dataset manifest.

A manifest is versioned JSON listing, per case, the NIfTI path of each
modality, the optional label path, and the optional methylation bit. Paths
are stored relative to the manifest file.
"""
from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import DimMismatch
from .volio import Volume3D, read_nifti, write_nifti

MANIFEST_VERSION = 1


@dataclass
class CaseRecord:
    case_id: str
    volumes: dict[str, Volume3D] = field(default_factory=dict)
    labels: Optional[Volume3D] = None
    mgmt: Optional[int] = None
    fold: Optional[int] = None

    def __post_init__(self):
        if self.mgmt is not None and self.mgmt not in (0, 1):
            raise ValueError(f"mgmt must be 0 or 1, got {self.mgmt}")
        dims = None
        for m, v in self.volumes.items():
            if dims is None:
                dims = v.dims
            elif v.dims != dims:
                raise DimMismatch(f"{self.case_id}: {m} dims {v.dims} != {dims}")
        if self.labels is not None and dims is not None and self.labels.dims != dims:
            raise DimMismatch(f"{self.case_id}: labels {self.labels.dims} != {dims}")

    @property
    def dims(self) -> Optional[tuple[int, int, int]]:
        for v in self.volumes.values():
            return v.dims
        return None


def write_case_tree(root: Path, case: CaseRecord, compress: bool = False) -> dict:
    """Write one case's volumes under root/case_id/, returning its manifest entry."""
    case_dir = Path(root) / case.case_id
    case_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".nii.gz" if compress else ".nii"

    def _write(name: str, vol: Volume3D) -> str:
        payload = write_nifti(vol)
        if compress:
            payload = gzip.compress(payload, mtime=0)  # mtime pinned for byte-stable trees
        (case_dir / f"{name}{suffix}").write_bytes(payload)
        return f"{case.case_id}/{name}{suffix}"

    entry: dict = {"case_id": case.case_id, "volumes": {}}
    for m, v in case.volumes.items():
        entry["volumes"][m] = _write(m.lower(), v)
    if case.labels is not None:
        entry["labels"] = _write("seg", case.labels)
    if case.mgmt is not None:
        entry["mgmt"] = int(case.mgmt)
    return entry


def save_manifest(path: Path, entries: list[dict]):
    doc = {"version": MANIFEST_VERSION, "cases": entries}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_dataset(root: Path, cases: list[CaseRecord], compress: bool = False) -> Path:
    root = Path(root)
    entries = [write_case_tree(root, c, compress=compress) for c in cases]
    manifest = root / "manifest.json"
    save_manifest(manifest, entries)
    return manifest


def load_manifest(path: Path) -> list[CaseRecord]:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {doc.get('version')}")
    base = path.parent
    cases = []
    for entry in doc["cases"]:
        volumes = {}
        for modality, rel in entry.get("volumes", {}).items():
            fp = base / rel
            if not fp.exists():
                raise FileNotFoundError(f"missing volume file: {fp}")
            volumes[modality] = read_nifti(fp.read_bytes())
        labels = None
        if entry.get("labels"):
            fp = base / entry["labels"]
            if not fp.exists():
                raise FileNotFoundError(f"missing label file: {fp}")
            labels = read_nifti(fp.read_bytes())
        cases.append(CaseRecord(
            case_id=entry["case_id"],
            volumes=volumes,
            labels=labels,
            mgmt=entry.get("mgmt"),
        ))
    return cases
