"""gliopipe: desk-scale brain MRI tumor segmentation and MGMT methylation prediction.

Pure numpy throughout: volume I/O (NIfTI-1 + minimal DICOM), the published
preprocessing chain, a hand-written 3D network engine, a 7-level U-Net
segmenter, per-modality residual classifiers stacked by a 16-weight logistic
ensemble, and an HTTP prediction service with a slice viewer backend.
"""
from . import augment, cases, lossmetric, phantom, preproc, predict, render, tensor, trainer, volio
from .errors import GliopipeError

__version__ = "0.1.0"

__all__ = [
    "augment",
    "cases",
    "lossmetric",
    "phantom",
    "preproc",
    "predict",
    "render",
    "tensor",
    "trainer",
    "volio",
    "GliopipeError",
    "__version__",
]
