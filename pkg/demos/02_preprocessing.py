"""Preprocessing walkthrough: the two normalization formulas, foreground
cropping, the 25-75% slice window, and multichannel stacking.

Run: python demos/02_preprocessing.py
"""
import numpy as np

from gliopipe.phantom import generate_phantom
from gliopipe.preproc import (
    CropMode,
    CropSpec,
    NormVariant,
    SliceWindow,
    compute_norm_params,
    crop,
    normalize,
    select_slice_window,
    stack_modalities,
)

case = generate_phantom(seed=5, dims=(48, 48, 48))
flair = case.volumes["FLAIR"]

for variant in NormVariant:
    params = compute_norm_params(flair, variant)
    out = normalize(flair, params)
    fg = out.data[flair.data != 0]
    print(f"{variant.value:<16} foreground range [{fg.min():+.3f}, {fg.max():+.3f}] "
          f"mean {fg.mean():+.4f}")

# foreground crop centered on the tumor
spec = CropSpec(size=(32, 32, 32), mode=CropMode.FOREGROUND)
img, lab = crop(flair, spec, case.labels)
total_tumor = int((case.labels.data != 0).sum())
kept = int((lab.data != 0).sum())
print(f"\nforeground crop 32^3 keeps {kept}/{total_tumor} tumor voxels")

# slice window used by the radiogenomic path
windowed = select_slice_window(flair, SliceWindow(0.25, 0.75))
print(f"slice window 25-75%: nz {flair.dims[2]} -> {windowed.dims[2]}")

# channel stacking for the segmentation network
mcv = stack_modalities(case.volumes, ("T1", "T1CE", "T2", "FLAIR"))
print(f"stacked input: channels={mcv.channels} tensor shape {mcv.to_tensor().shape}")
