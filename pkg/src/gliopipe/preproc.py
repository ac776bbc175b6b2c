"""Preprocessing: intensity normalization, cropping, slice windows, channel stacking.

Normalization statistics are computed over nonzero voxels only, because
skull-stripped volumes are mostly zero background; background voxels stay
exactly 0 through every variant.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    CropTooLarge,
    DegenerateScaleWarning,
    DimMismatch,
    EmptyForeground,
    EmptyWindow,
    MissingModality,
)
from .volio import Volume3D, volume_from_array

MODALITIES = ("T1", "T1CE", "T2", "FLAIR")
CHANNELS_4 = ("T1", "T1CE", "T2", "FLAIR")
CHANNELS_3 = ("T1CE", "T2", "FLAIR")


class NormVariant(str, Enum):
    # (x - mean) / (max - min); the formula as published, range not [0, 1]
    MINMAX_PAPER = "minmax_paper"
    # (x - min) / (max - min); guaranteed [0, 1] on the foreground
    MINMAX_STANDARD = "minmax_standard"
    ZSCORE = "zscore"


@dataclass(frozen=True)
class NormalizationParams:
    x_mean: float
    x_min: float
    x_max: float
    sigma: float  # population std
    variant: NormVariant

    def __post_init__(self):
        if not (self.x_min <= self.x_mean <= self.x_max):
            raise ValueError("min <= mean <= max violated")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def compute_norm_params(v: Volume3D, variant: NormVariant = NormVariant.MINMAX_STANDARD) -> NormalizationParams:
    """Foreground (nonzero-voxel) statistics in float64."""
    fg = v.data[v.data != 0]
    if fg.size == 0:
        raise EmptyForeground("volume has no nonzero voxels")
    fg64 = fg.astype(np.float64)
    return NormalizationParams(
        x_mean=float(fg64.mean()),
        x_min=float(fg64.min()),
        x_max=float(fg64.max()),
        sigma=float(fg64.std()),
        variant=NormVariant(variant),
    )


def normalize(v: Volume3D, p: NormalizationParams) -> Volume3D:
    """Apply the variant recorded in ``p``; background (zero) voxels stay 0.

    A degenerate scale (max == min, or sigma == 0) produces an all-zero volume
    and a DegenerateScaleWarning instead of a hard error.
    """
    if p.variant == NormVariant.ZSCORE:
        scale = p.sigma
        shift = p.x_mean
    elif p.variant == NormVariant.MINMAX_PAPER:
        scale = p.x_max - p.x_min
        shift = p.x_mean
    else:
        scale = p.x_max - p.x_min
        shift = p.x_min
    mask = v.data != 0
    out = np.zeros(v.dims, dtype=np.float32)
    if scale == 0:
        warnings.warn("degenerate normalization scale; output forced to zeros", DegenerateScaleWarning)
    else:
        vals = (v.data[mask].astype(np.float64) - shift) / scale
        out[mask] = vals.astype(np.float32)
    return Volume3D(dims=v.dims, spacing=v.spacing, data=out, orientation=v.orientation, dtype="f32")


# ---------------------------------------------------------------------------
# cropping
# ---------------------------------------------------------------------------

class CropMode(str, Enum):
    STATIC = "static"
    RANDOM = "random"
    FOREGROUND = "foreground"


@dataclass(frozen=True)
class CropSpec:
    size: tuple[int, int, int]
    mode: CropMode = CropMode.FOREGROUND
    origin: tuple[int, int, int] = (0, 0, 0)  # STATIC only
    seed: int = 0  # RANDOM only
    min_foreground_fraction: float = 0.0  # FOREGROUND only

    def __post_init__(self):
        if any(s < 1 for s in self.size):
            raise ValueError("crop size components must be >= 1")
        if not (0.0 <= self.min_foreground_fraction <= 1.0):
            raise ValueError("min_foreground_fraction must be in [0, 1]")


# above this many candidate origins the foreground search falls back to a
# stride-8 grid (plus the last valid origin on each axis)
_EXHAUSTIVE_LIMIT = 10_000


def _axis_candidates(extent: int, stride: int) -> np.ndarray:
    pts = list(range(0, extent + 1, stride))
    if pts[-1] != extent:
        pts.append(extent)
    return np.asarray(pts, dtype=np.int64)


def resolve_crop_origin(
    spec: CropSpec,
    dims: tuple[int, int, int],
    foreground: Optional[np.ndarray] = None,
) -> tuple[int, int, int]:
    """Pick the crop origin for a volume of ``dims``.

    ``foreground`` is a boolean array used only in FOREGROUND mode; ties are
    broken toward the lexicographically smallest origin so the result is
    deterministic.
    """
    cx, cy, cz = spec.size
    nx, ny, nz = dims
    if cx > nx or cy > ny or cz > nz:
        raise CropTooLarge(f"crop {spec.size} does not fit in {dims}")
    max_o = (nx - cx, ny - cy, nz - cz)

    if spec.mode == CropMode.STATIC:
        o = spec.origin
        if any(o[i] < 0 or o[i] > max_o[i] for i in range(3)):
            raise CropTooLarge(f"origin {o} + size {spec.size} exceeds {dims}")
        return tuple(int(c) for c in o)

    if spec.mode == CropMode.RANDOM:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        return tuple(int(rng.integers(0, m + 1)) for m in max_o)

    # FOREGROUND: maximize contained foreground over a candidate-origin grid
    if foreground is None:
        raise ValueError("foreground mask required for FOREGROUND crop mode")
    center = tuple((max_o[i]) // 2 for i in range(3))
    total = int(foreground.sum())
    if total == 0:
        return center

    n_exhaustive = (max_o[0] + 1) * (max_o[1] + 1) * (max_o[2] + 1)
    stride = 1 if n_exhaustive <= _EXHAUSTIVE_LIMIT else 8
    ox = _axis_candidates(max_o[0], stride)
    oy = _axis_candidates(max_o[1], stride)
    oz = _axis_candidates(max_o[2], stride)

    # summed-volume table: sat[i,j,k] = count of foreground in [0:i, 0:j, 0:k]
    sat = np.zeros((nx + 1, ny + 1, nz + 1), dtype=np.int64)
    sat[1:, 1:, 1:] = foreground.astype(np.int64).cumsum(0).cumsum(1).cumsum(2)

    def window_sums(xs, ys, zs):
        x0, y0, z0 = np.ix_(xs, ys, zs)
        x1, y1, z1 = x0 + cx, y0 + cy, z0 + cz
        return (
            sat[x1, y1, z1]
            - sat[x0, y1, z1]
            - sat[x1, y0, z1]
            - sat[x1, y1, z0]
            + sat[x0, y0, z1]
            + sat[x0, y1, z0]
            + sat[x1, y0, z0]
            - sat[x0, y0, z0]
        )

    counts = window_sums(ox, oy, oz)
    best_flat = int(np.argmax(counts))  # first maximum = lexicographically smallest
    bi = np.unravel_index(best_flat, counts.shape)
    best = (int(ox[bi[0]]), int(oy[bi[1]]), int(oz[bi[2]]))
    best_count = int(counts[bi])
    crop_voxels = cx * cy * cz
    if best_count / crop_voxels < spec.min_foreground_fraction:
        return center
    return best


def crop(
    v: Volume3D,
    spec: CropSpec,
    labels: Optional[Volume3D] = None,
) -> tuple[Volume3D, Optional[Volume3D]]:
    """Crop ``v`` (and ``labels`` at the identical origin) to ``spec.size``.

    FOREGROUND mode maximizes contained nonzero-label voxels (nonzero
    intensity when no labels are given), falling back to a center crop when
    ``min_foreground_fraction`` cannot be met.
    """
    if labels is not None and labels.dims != v.dims:
        raise DimMismatch(f"labels {labels.dims} != volume {v.dims}")
    fg = None
    if spec.mode == CropMode.FOREGROUND:
        src = labels.data if labels is not None else v.data
        fg = src != 0
    origin = resolve_crop_origin(spec, v.dims, fg)
    return crop_at(v, origin, spec.size), (crop_at(labels, origin, spec.size) if labels is not None else None)


def crop_at(v: Volume3D, origin: tuple[int, int, int], size: tuple[int, int, int]) -> Volume3D:
    """Copy the axis-aligned window at ``origin`` of extent ``size``."""
    ox, oy, oz = origin
    cx, cy, cz = size
    if any(o < 0 for o in origin) or ox + cx > v.dims[0] or oy + cy > v.dims[1] or oz + cz > v.dims[2]:
        raise CropTooLarge(f"window {origin}+{size} exceeds {v.dims}")
    data = np.ascontiguousarray(v.data[ox : ox + cx, oy : oy + cy, oz : oz + cz])
    return Volume3D(dims=(cx, cy, cz), spacing=v.spacing, data=data, orientation=v.orientation, dtype=v.dtype)


# ---------------------------------------------------------------------------
# slice window
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SliceWindow:
    lo: float = 0.25
    hi: float = 0.75

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi <= 1.0):
            raise ValueError(f"need 0 <= lo < hi <= 1, got ({self.lo}, {self.hi})")


def select_slice_window(v: Volume3D, w: SliceWindow) -> Volume3D:
    """Keep z slices with index in [floor(lo*nz), floor(hi*nz))."""
    nz = v.dims[2]
    k0 = int(np.floor(w.lo * nz))
    k1 = int(np.floor(w.hi * nz))
    if k1 <= k0:
        raise EmptyWindow(f"window ({w.lo}, {w.hi}) selects no slices for nz={nz}")
    data = np.ascontiguousarray(v.data[:, :, k0:k1])
    return Volume3D(
        dims=(v.dims[0], v.dims[1], k1 - k0),
        spacing=v.spacing,
        data=data,
        orientation=v.orientation,
        dtype=v.dtype,
    )


# ---------------------------------------------------------------------------
# multichannel stacking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiChannelVolume:
    channels: tuple[str, ...]
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray  # (C, nx, ny, nz) float32

    def __post_init__(self):
        if self.data.shape != (len(self.channels),) + tuple(self.dims):
            raise ValueError("data shape does not match channels/dims")

    def channel(self, tag: str) -> Volume3D:
        """Extract one channel back out as a Volume3D."""
        if tag not in self.channels:
            raise MissingModality(tag)
        idx = self.channels.index(tag)
        return volume_from_array(np.ascontiguousarray(self.data[idx]), spacing=self.spacing)

    def to_tensor(self) -> np.ndarray:
        """(1, C, D, H, W) float32 with (D, H, W) = (nz, ny, nx)."""
        return np.ascontiguousarray(self.data.transpose(0, 3, 2, 1))[None, ...]


def stack_modalities(vols: Mapping[str, Volume3D], order: Sequence[str] = CHANNELS_4) -> MultiChannelVolume:
    """Stack co-registered modality volumes into channel order ``order``."""
    missing = [m for m in order if m not in vols]
    if missing:
        raise MissingModality(", ".join(missing))
    dims = vols[order[0]].dims
    spacing = vols[order[0]].spacing
    for m in order:
        if vols[m].dims != dims:
            raise DimMismatch(f"{m} dims {vols[m].dims} != {dims}")
    data = np.stack([vols[m].data.astype(np.float32, copy=False) for m in order], axis=0)
    return MultiChannelVolume(channels=tuple(order), dims=dims, spacing=spacing, data=data)


def mask_from_tensor(dense: np.ndarray) -> np.ndarray:
    """Inverse of MultiChannelVolume.to_tensor for a (D, H, W) per-voxel map."""
    return np.ascontiguousarray(dense.transpose(2, 1, 0))
