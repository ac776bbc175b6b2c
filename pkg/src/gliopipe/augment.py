"""Conventional augmentations: flip, 90-degree rotate, stretch, noise, blur.

Geometric transforms hit image and label identically (labels resampled with
nearest neighbor so the value set never grows); intensity transforms touch
image channels only. Everything is deterministic given the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .preproc import MultiChannelVolume
from .volio import Volume3D

AXIS_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class AugmentPolicy:
    flip_prob: tuple[float, float, float] = (0.5, 0.5, 0.5)
    # list of ((axis_a, axis_b), probability) for 90-degree rotations
    rot90: tuple[tuple[tuple[int, int], float], ...] = (((0, 1), 0.5),)
    stretch_range: tuple[float, float] = (0.9, 1.1)
    noise_sigma: float = 0.01
    blur_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.flip_prob):
            raise ValueError("flip probabilities must be in [0, 1]")
        for (a, b), p in self.rot90:
            if a == b or not 0 <= a <= 2 or not 0 <= b <= 2 or not 0.0 <= p <= 1.0:
                raise ValueError("rot90 entries must be distinct axes with p in [0, 1]")
        lo, hi = self.stretch_range
        if not (0.0 < lo <= hi):
            raise ValueError("stretch_range must satisfy 0 < min <= max")
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ValueError("sigmas must be >= 0")


NEUTRAL_POLICY = AugmentPolicy(
    flip_prob=(0.0, 0.0, 0.0), rot90=(), stretch_range=(1.0, 1.0), noise_sigma=0.0, blur_sigma=0.0
)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _source_coords(n_in: int, n_out: int) -> np.ndarray:
    # center-aligned mapping, clamped so trilinear stays a convex combination
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(src, 0.0, n_in - 1)


def resize_array(arr: np.ndarray, out_dims: Sequence[int], interp: str = "trilinear") -> np.ndarray:
    """Resample a 3D array to ``out_dims`` with trilinear or nearest interpolation."""
    out_dims = tuple(int(d) for d in out_dims)
    if arr.shape == out_dims:
        return arr.copy()
    coords = [_source_coords(arr.shape[i], out_dims[i]) for i in range(3)]
    if interp == "nearest":
        idx = [np.rint(c).astype(np.int64).clip(0, arr.shape[i] - 1) for i, c in enumerate(coords)]
        return arr[np.ix_(*idx)].copy()
    if interp != "trilinear":
        raise ValueError(f"unknown interpolation {interp!r}")
    lo = [np.floor(c).astype(np.int64) for c in coords]
    lo = [np.clip(l, 0, max(arr.shape[i] - 2, 0)) for i, l in enumerate(lo)]
    hi = [np.minimum(l + 1, arr.shape[i] - 1) for i, l in enumerate(lo)]
    frac = [np.clip(coords[i] - lo[i], 0.0, 1.0) for i in range(3)]

    out = np.zeros(out_dims, dtype=np.float64)
    for cx, wx in ((lo[0], 1.0 - frac[0]), (hi[0], frac[0])):
        for cy, wy in ((lo[1], 1.0 - frac[1]), (hi[1], frac[1])):
            for cz, wz in ((lo[2], 1.0 - frac[2]), (hi[2], frac[2])):
                w = wx[:, None, None] * wy[None, :, None] * wz[None, None, :]
                out += w * arr[np.ix_(cx, cy, cz)]
    return out.astype(arr.dtype if arr.dtype == np.float64 else np.float32)


def stretch(v: Volume3D, factors: tuple[float, float, float], interp: str = "trilinear") -> Volume3D:
    """Scale each axis by its factor; output dims are round(n * f), floor 1."""
    if any(f <= 0 for f in factors):
        raise ValueError("stretch factors must be > 0")
    out_dims = tuple(max(1, int(round(n * f))) for n, f in zip(v.dims, factors))
    if out_dims == v.dims and all(f == 1.0 for f in factors):
        return v
    data = resize_array(v.data.astype(np.float32, copy=False), out_dims, interp)
    if v.dtype == "u8":
        data = np.rint(data).astype(np.uint8)
    spacing = tuple(s * n / m for s, n, m in zip(v.spacing, v.dims, out_dims))
    return Volume3D(dims=out_dims, spacing=spacing, data=data, orientation=v.orientation, dtype=v.dtype)


def resize_volume(v: Volume3D, out_dims: tuple[int, int, int], interp: str = "trilinear") -> Volume3D:
    """Resample to explicit target dims (classifier input standardization)."""
    if v.dims == tuple(out_dims):
        return v
    data = resize_array(v.data.astype(np.float32, copy=False), out_dims, interp)
    if v.dtype == "u8":
        data = np.rint(data).astype(np.uint8)
    spacing = tuple(s * n / m for s, n, m in zip(v.spacing, v.dims, out_dims))
    return Volume3D(dims=tuple(out_dims), spacing=spacing, data=data, orientation=v.orientation, dtype=v.dtype)


# ---------------------------------------------------------------------------
# blur / noise
# ---------------------------------------------------------------------------

def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return (k / k.sum()).astype(np.float32)


def _convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    a = np.moveaxis(arr, axis, -1)
    n = a.shape[-1]
    r = len(kernel) // 2
    pad = [(0, 0)] * (a.ndim - 1) + [(r, r)]
    ap = np.pad(a, pad)  # zero padding: background outside the head is zero
    out = np.zeros_like(a, dtype=np.float32)
    for j, kv in enumerate(kernel):
        out += kv * ap[..., j : j + n]
    return np.moveaxis(out, -1, axis)


def gaussian_blur(data: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur over the last three axes."""
    if sigma <= 0:
        return data.copy()
    k = gaussian_kernel(sigma)
    out = data.astype(np.float32, copy=True)
    for axis in (-3, -2, -1):
        out = _convolve_axis(out, k, axis)
    return out


# ---------------------------------------------------------------------------
# policy application
# ---------------------------------------------------------------------------

def apply(
    policy: AugmentPolicy,
    sample: tuple[MultiChannelVolume, Optional[Volume3D]],
    seed: Optional[int] = None,
) -> tuple[MultiChannelVolume, Optional[Volume3D]]:
    """Draw one augmentation from the policy and apply it to image (+ labels).

    The label volume receives exactly the same geometric draws; noise and blur
    touch the image channels only.
    """
    image, labels = sample
    if labels is not None and labels.dims != image.dims:
        raise ValueError(f"label dims {labels.dims} != image dims {image.dims}")
    rng = np.random.Generator(np.random.PCG64(policy.seed if seed is None else seed))

    img = image.data.copy()  # (C, nx, ny, nz)
    lab = labels.data.copy() if labels is not None else None

    for axis in range(3):
        if rng.random() < policy.flip_prob[axis]:
            img = np.flip(img, axis=axis + 1)
            if lab is not None:
                lab = np.flip(lab, axis=axis)

    for (a, b), p in policy.rot90:
        if rng.random() < p:
            k = int(rng.integers(1, 4))
            img = np.rot90(img, k, axes=(a + 1, b + 1))
            if lab is not None:
                lab = np.rot90(lab, k, axes=(a, b))

    lo, hi = policy.stretch_range
    factors = tuple(float(f) for f in rng.uniform(lo, hi, size=3)) if (lo, hi) != (1.0, 1.0) else (1.0, 1.0, 1.0)
    if factors != (1.0, 1.0, 1.0):
        out_dims = tuple(max(1, int(round(n * f))) for n, f in zip(img.shape[1:], factors))
        img = np.stack([resize_array(c, out_dims, "trilinear") for c in img], axis=0)
        if lab is not None:
            lab = resize_array(lab, out_dims, "nearest")

    img = np.ascontiguousarray(img, dtype=np.float32)
    if policy.blur_sigma > 0:
        img = gaussian_blur(img, policy.blur_sigma)
    if policy.noise_sigma > 0:
        img = img + rng.normal(0.0, policy.noise_sigma, size=img.shape).astype(np.float32)

    dims = img.shape[1:]
    out_image = MultiChannelVolume(channels=image.channels, dims=dims, spacing=image.spacing, data=img)
    out_labels = None
    if labels is not None:
        lab = np.ascontiguousarray(lab)
        out_labels = replace(labels, dims=dims, data=lab)
    return out_image, out_labels
