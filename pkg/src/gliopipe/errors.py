"""Typed errors shared across the package.

Every failure mode callers are expected to handle has its own class so that
tests and the HTTP layer can map them without string matching.
"""


class GliopipeError(Exception):
    """Base class for all typed errors raised by this package."""


# --- volume I/O ---

class BadMagic(GliopipeError):
    """Payload is not a single-file NIfTI-1 stream."""


class BadHeader(GliopipeError):
    """Structurally valid magic but header fields violate NIfTI-1 limits we support."""


class UnsupportedDatatype(GliopipeError):
    """NIfTI datatype code outside the supported set {2, 4, 8, 16, 512}."""


class TruncatedData(GliopipeError):
    """Fewer voxels in the payload than the header promises."""


class NotDicom(GliopipeError):
    """File lacks the DICM marker after the 128-byte preamble."""


class MixedSeries(GliopipeError):
    """Slices disagree on rows/cols/pixel spacing within one series."""


class UnsupportedTransferSyntax(GliopipeError):
    """Compressed or non explicit-VR-little-endian DICOM pixel data."""


# --- preprocessing ---

class EmptyForeground(GliopipeError):
    """All voxels are zero; no statistics can be computed."""


class DegenerateScaleWarning(UserWarning):
    """(max - min) or sigma is zero; normalization output forced to zeros."""


class CropTooLarge(GliopipeError):
    """Requested crop does not fit inside the source volume."""


class EmptyWindow(GliopipeError):
    """Slice window selects no slices."""


class DimMismatch(GliopipeError):
    """Volumes that must share dimensions do not."""


class MissingModality(GliopipeError):
    """A requested modality is absent from the input set."""


# --- tensor engine / models ---

class ShapeMismatch(GliopipeError):
    """Tensor arguments have incompatible shapes."""


class BadCheckpoint(GliopipeError):
    """Checkpoint bytes fail magic/version/CRC validation."""


# --- metrics / training ---

class IllegalLabel(GliopipeError):
    """Label volume contains values outside {0, 1, 2, 4}."""


class SingleClass(GliopipeError):
    """Binary metric or fit requested but labels contain one class only."""


class NoModalities(GliopipeError):
    """Prediction requested for a case with no usable modality."""


class TooFewCases(GliopipeError):
    """Fewer cases than folds."""
