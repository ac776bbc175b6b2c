"""Deterministic 2D slice rasters with optional label overlay, written as PNG.

The PNG encoder is self-contained (zlib streams, filter 0) so identical
inputs always produce identical bytes; the viewer and its tests rely on that.
Overlay palette is fixed: label 1 red, 2 green, 4 yellow.
"""
from __future__ import annotations

import struct
import zlib
from typing import Optional

import numpy as np

PALETTE = {1: (255, 0, 0), 2: (0, 255, 0), 4: (255, 255, 0)}
AXES = ("axial", "coronal", "sagittal")


def axis_length(dims: tuple[int, int, int], axis: str) -> int:
    if axis == "axial":
        return dims[2]
    if axis == "coronal":
        return dims[1]
    if axis == "sagittal":
        return dims[0]
    raise ValueError(f"unknown axis {axis!r}")


def _extract_plane(data: np.ndarray, axis: str, index: int) -> np.ndarray:
    """Raster plane (rows, cols) for one slice of an (x, y, z) volume."""
    if axis == "axial":
        return data[:, :, index].T  # rows=y, cols=x
    if axis == "coronal":
        return data[:, index, :].T  # rows=z, cols=x
    if axis == "sagittal":
        return data[index, :, :].T  # rows=z, cols=y
    raise ValueError(f"unknown axis {axis!r}")


def render_slice(
    volume: np.ndarray,
    axis: str,
    index: int,
    labels: Optional[np.ndarray] = None,
    overlay: bool = False,
    alpha: float = 0.5,
    window: Optional[tuple[float, float]] = None,
) -> np.ndarray:
    """(rows, cols, 3) u8 grayscale raster, optionally alpha-blended with labels.

    The intensity window defaults to the whole-volume min/max so every slice
    of a study shares one deterministic scale.
    """
    n = axis_length(volume.shape, axis)
    if not 0 <= index < n:
        raise IndexError(f"slice {index} outside [0, {n}) on {axis}")
    plane = _extract_plane(volume, axis, index).astype(np.float64)
    lo, hi = window if window is not None else (float(volume.min()), float(volume.max()))
    if hi > lo:
        gray = np.clip((plane - lo) / (hi - lo), 0.0, 1.0)
    else:
        gray = np.zeros_like(plane)
    img = np.repeat((gray * 255.0 + 0.5).astype(np.uint8)[:, :, None], 3, axis=2)

    if overlay and labels is not None:
        alpha = min(max(float(alpha), 0.0), 1.0)
        lab_plane = _extract_plane(labels, axis, index)
        for value, color in PALETTE.items():
            m = lab_plane == value
            if not m.any():
                continue
            blended = (1.0 - alpha) * img[m].astype(np.float64) + alpha * np.asarray(color, dtype=np.float64)
            img[m] = (blended + 0.5).astype(np.uint8)
    return img


def write_png(rgb: np.ndarray) -> bytes:
    """Encode (rows, cols, 3) u8 as a lossless PNG (color type 2, filter 0)."""
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) u8, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + rgb[r].tobytes() for r in range(h))
    idat = zlib.compress(raw, 6)
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )


def slice_png(
    volume: np.ndarray,
    axis: str,
    index: int,
    labels: Optional[np.ndarray] = None,
    overlay: bool = False,
    alpha: float = 0.5,
    window: Optional[tuple[float, float]] = None,
) -> bytes:
    return write_png(render_slice(volume, axis, index, labels, overlay, alpha, window))
