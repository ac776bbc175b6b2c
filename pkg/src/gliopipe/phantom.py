"""Synthetic brain phantoms with known geometry and a plantable methylation signature.

Each phantom is a smooth background ellipsoid ("brain") holding a nested
tumor: necrotic core (label 1) wrapped by an enhancing rim (label 4) inside an
edema halo (label 2). Modality contrasts differ the way the real sequences
do: edema lights up the FLAIR-like channel, the rim lights up the T1CE-like
channel. When mgmt=1 a high-frequency intensity ripple is multiplied into the
core+rim region of every modality, strong enough that a plain high-pass
energy statistic already separates the classes.

Fully deterministic per (seed, dims, modalities, mgmt).
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .augment import resize_array
from .cases import CaseRecord
from .preproc import MODALITIES
from .volio import Volume3D, volume_from_array

# per-modality intensity multipliers by tissue
_CONTRASTS = {
    "T1": {"brain": 1.00, "edema": 0.70, "rim": 0.85, "core": 0.45},
    "T1CE": {"brain": 1.00, "edema": 0.75, "rim": 2.20, "core": 0.40},
    "T2": {"brain": 0.90, "edema": 1.60, "rim": 1.00, "core": 1.30},
    "FLAIR": {"brain": 0.85, "edema": 2.00, "rim": 1.20, "core": 1.10},
}

RIPPLE_AMPLITUDE = 0.8
RIPPLE_WAVELENGTH = 4.0  # voxels
RIPPLE_PHASE = 0.5  # half-voxel shift keeps |sin| = 0.707 on the integer grid
NOISE_SIGMA = 0.015


def phantom_params(seed: int, dims: tuple[int, int, int]) -> dict:
    """Deterministic construction parameters; the geometry oracle for tests."""
    rng = np.random.default_rng([int(seed), 0xFA57])
    dims = tuple(int(d) for d in dims)
    center = np.array([d / 2.0 for d in dims])
    brain_axes = np.array([0.42 * d * rng.uniform(0.92, 1.08) for d in dims])
    r3 = rng.uniform(0.26, 0.30) * min(dims)  # edema outer radius
    r2 = 0.62 * r3  # rim outer radius
    r1 = 0.38 * r3  # core radius
    offset = np.array([
        rng.uniform(-0.25, 0.25) * brain_axes[0],
        rng.uniform(-0.25, 0.25) * brain_axes[1],
        rng.uniform(-0.15, 0.15) * brain_axes[2],  # keep tumor in the middle slices
    ])
    tumor_center = center + offset
    return {
        "dims": dims,
        "brain_center": center,
        "brain_axes": brain_axes,
        "tumor_center": tumor_center,
        "r_core": r1,
        "r_rim": r2,
        "r_edema": r3,
    }


def _smooth_field(rng: np.random.Generator, dims: tuple[int, int, int], scale: float) -> np.ndarray:
    coarse = rng.standard_normal([max(2, d // 8) for d in dims]).astype(np.float32)
    return scale * resize_array(coarse, dims, "trilinear")


def generate_phantom(
    seed: int,
    dims: tuple[int, int, int] = (64, 64, 64),
    modalities: Sequence[str] = MODALITIES,
    mgmt: Optional[int] = None,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> CaseRecord:
    p = phantom_params(seed, dims)
    dims = p["dims"]
    if mgmt is None:
        mgmt = int(np.random.default_rng([int(seed), 77]).integers(0, 2))

    xs = np.arange(dims[0], dtype=np.float32)[:, None, None]
    ys = np.arange(dims[1], dtype=np.float32)[None, :, None]
    zs = np.arange(dims[2], dtype=np.float32)[None, None, :]

    bc, ba = p["brain_center"], p["brain_axes"]
    ell = ((xs - bc[0]) / ba[0]) ** 2 + ((ys - bc[1]) / ba[1]) ** 2 + ((zs - bc[2]) / ba[2]) ** 2
    brain = ell <= 1.0

    tc = p["tumor_center"]
    dist = np.sqrt((xs - tc[0]) ** 2 + (ys - tc[1]) ** 2 + (zs - tc[2]) ** 2)
    core = dist <= p["r_core"]
    rim = (dist <= p["r_rim"]) & ~core
    edema = (dist <= p["r_edema"]) & ~core & ~rim

    labels = np.zeros(dims, dtype=np.uint8)
    labels[edema] = 2
    labels[rim] = 4
    labels[core] = 1

    base = (1.0 - 0.35 * np.clip(ell, 0.0, 1.0)).astype(np.float32)
    rng_tex = np.random.default_rng([int(seed), 1])
    texture = _smooth_field(rng_tex, dims, 0.06)

    ripple = None
    if mgmt == 1:
        k = 2.0 * np.pi / RIPPLE_WAVELENGTH
        ripple = 1.0 + RIPPLE_AMPLITUDE * (
            np.sin(k * (xs + RIPPLE_PHASE)) * np.sin(k * (ys + RIPPLE_PHASE)) * np.sin(k * (zs + RIPPLE_PHASE))
        )
        ripple = ripple.astype(np.float32)

    volumes: dict[str, Volume3D] = {}
    for mi, m in enumerate(modalities):
        c = _CONTRASTS[m]
        mult = np.full(dims, c["brain"], dtype=np.float32)
        mult[edema] = c["edema"]
        mult[rim] = c["rim"]
        mult[core] = c["core"]
        data = (base + texture) * mult
        if ripple is not None:
            signature_region = dist <= p["r_rim"]  # core + rim
            data = np.where(signature_region, data * ripple, data)
        rng_noise = np.random.default_rng([int(seed), 2, mi])
        data = data + NOISE_SIGMA * rng_noise.standard_normal(dims).astype(np.float32)
        data = np.where(brain, np.maximum(data, 0.01), 0.0).astype(np.float32)
        volumes[m] = volume_from_array(data, spacing=spacing)

    return CaseRecord(
        case_id=f"phantom-{int(seed):06d}",
        volumes=volumes,
        labels=volume_from_array(labels, spacing=spacing),
        mgmt=int(mgmt),
    )


def generate_phantom_dataset(
    count: int,
    dims: tuple[int, int, int] = (64, 64, 64),
    modalities: Sequence[str] = MODALITIES,
    seed: int = 0,
    balanced_mgmt: bool = True,
) -> list[CaseRecord]:
    """N phantoms with distinct derived seeds; mgmt alternates when balanced."""
    cases = []
    for i in range(count):
        mgmt = (i % 2) if balanced_mgmt else None
        cases.append(generate_phantom(seed * 100_003 + i, dims=dims, modalities=modalities, mgmt=mgmt))
    return cases
