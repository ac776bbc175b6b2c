"""Shared inference paths for the CLI and the HTTP service.

Both surfaces call exactly these functions, so a given checkpoint and input
always produce the same prediction regardless of entry point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import MissingModality, ShapeMismatch
from .lossmetric import LabelScheme
from .tensor import ops
from .models import EnsembleModel, MethylationPrediction, ResClassifier3D, UNet7, predict_methylation
from .preproc import (
    NormVariant,
    SliceWindow,
    compute_norm_params,
    crop_at,
    mask_from_tensor,
    normalize,
    stack_modalities,
)
from .volio import Volume3D, canonicalize, volume_from_array


@dataclass(frozen=True)
class SegmentationResult:
    mask: Volume3D  # u8, raw labels {0,1,2,4}, dims == input dims
    region_voxels: dict[str, int]
    region_volumes_mm3: dict[str, float]


def tiled_dense_prediction(
    model: UNet7,
    x: np.ndarray,
    window: Optional[tuple[int, int, int]] = None,
) -> np.ndarray:
    """Argmax class map via overlapping-window inference.

    Networks trained on foreground crops see a different intensity
    distribution than a whole volume, so inference slides a window of the
    training crop size (half-window stride, softmax-averaged overlaps).
    All-zero windows are background by construction and skip the model.
    """
    _, nclasses = x.shape[0], model.config.num_classes
    dims = x.shape[2:]
    if window is None:
        window = dims
    window = tuple(min((w // 8) * 8, d) for w, d in zip(window, dims))
    if any(w < 8 for w in window):
        raise ShapeMismatch(f"window {window} too small")
    if window == tuple(dims):
        return model.predict_dense(x)

    starts = []
    for d, w in zip(dims, window):
        stride = max(w // 2, 1)
        s = list(range(0, d - w + 1, stride))
        if s[-1] != d - w:
            s.append(d - w)
        starts.append(s)

    probs = np.zeros((nclasses,) + tuple(dims), dtype=np.float64)
    counts = np.zeros(dims, dtype=np.float64)
    for sd in starts[0]:
        for sh in starts[1]:
            for sw in starts[2]:
                sl = (slice(sd, sd + window[0]), slice(sh, sh + window[1]), slice(sw, sw + window[2]))
                tile = x[:, :, sl[0], sl[1], sl[2]]
                if not np.any(tile):
                    p = np.zeros((nclasses,) + window, dtype=np.float64)
                    p[0] = 1.0  # empty input is background by construction
                else:
                    logits = model.forward(np.ascontiguousarray(tile))
                    p, _ = ops.softmax_forward(logits[0].astype(np.float64), axis=0)
                probs[:, sl[0], sl[1], sl[2]] += p
                counts[sl] += 1.0
    probs /= counts[None, ...]
    return np.argmax(probs, axis=0)


def _centered_div8_window(dims: tuple[int, int, int]):
    inner = tuple((d // 8) * 8 for d in dims)
    if any(d == 0 for d in inner):
        raise MissingModality(f"volume dims {dims} too small for the segmenter")
    origin = tuple((d - i) // 2 for d, i in zip(dims, inner))
    return origin, inner


def segment_case(
    model: UNet7,
    volumes: Mapping[str, Volume3D],
    channels: list[str],
    normalization: NormVariant = NormVariant.MINMAX_STANDARD,
    region_source: str = "paper",
    window: Optional[tuple[int, int, int]] = None,
) -> SegmentationResult:
    """Normalize, stack, run the U-Net, and map back to a raw-label mask.

    ``window`` (usually the training crop size from the checkpoint) enables
    overlapping-window inference. Volumes whose dims are not multiples of 8
    are center-cropped for inference; the returned mask always matches the
    input dims (zeros outside the evaluated window).
    """
    missing = [m for m in channels if m not in volumes]
    if missing:
        raise MissingModality(", ".join(missing))
    canon = {m: canonicalize(volumes[m]) for m in channels}
    dims = canon[channels[0]].dims
    spacing = canon[channels[0]].spacing
    normed = {m: normalize(v, compute_norm_params(v, normalization)) for m, v in canon.items()}
    origin, inner = _centered_div8_window(dims)
    cropped = {m: crop_at(v, origin, inner) for m, v in normed.items()}
    mcv = stack_modalities(cropped, channels)
    # crop sizes are (x, y, z); the tensor is laid out (z, y, x)
    tensor_window = tuple(reversed(window)) if window else None
    dense = tiled_dense_prediction(model, mcv.to_tensor(), tensor_window)
    raw_inner = LabelScheme.to_raw(mask_from_tensor(dense))
    mask_data = np.zeros(dims, dtype=np.uint8)
    mask_data[
        origin[0] : origin[0] + inner[0],
        origin[1] : origin[1] + inner[1],
        origin[2] : origin[2] + inner[2],
    ] = raw_inner
    mask = volume_from_array(mask_data, spacing=spacing)

    scheme = LabelScheme(region_source)
    voxel_mm3 = mask.voxel_volume_mm3()
    region_voxels = {}
    region_volumes = {}
    for name, labels in scheme.regions.items():
        count = int(np.isin(mask_data, labels).sum())
        region_voxels[name] = count
        region_volumes[name] = count * voxel_mm3
    return SegmentationResult(mask=mask, region_voxels=region_voxels, region_volumes_mm3=region_volumes)


def methylation_case(
    models: Mapping[tuple[int, str], ResClassifier3D],
    ensemble: EnsembleModel,
    volumes: Mapping[str, Volume3D],
    window: Optional[SliceWindow] = None,
) -> MethylationPrediction:
    return predict_methylation(volumes, models, ensemble, window or SliceWindow(0.25, 0.75))
