"""Volume I/O: NIfTI-1 single-file read/write and a minimal DICOM series reader.

Scope is deliberately narrow: uncompressed or gzipped single-file NIfTI-1, and
explicit-VR little-endian uncompressed DICOM. Anything else raises a typed
error instead of guessing. Patient-identifying DICOM tags are never read or
stored.

Voxel convention: ``Volume3D.data`` is indexed ``[x, y, z]``; on disk the
linear order is x-fastest, matching the NIfTI layout. The canonical frame is
axial LPS with identity orientation.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadHeader,
    BadMagic,
    MixedSeries,
    NotDicom,
    TruncatedData,
    UnsupportedDatatype,
    UnsupportedTransferSyntax,
)

# NIfTI datatype code -> numpy dtype (little endian)
_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 512: np.uint16}

_VOLUME_DTYPES = {
    "u8": np.uint8,
    "i16": np.int16,
    "u16": np.uint16,
    "f32": np.float32,
}

IDENTITY_ORIENTATION = (1, 2, 3)

EXPLICIT_VR_LITTLE_ENDIAN = "1.2.840.10008.1.2.1"


@dataclass(frozen=True)
class Volume3D:
    """One scalar 3D image plus geometry metadata.

    ``orientation[k] = s * (a + 1)`` means stored axis ``k`` runs along
    canonical axis ``a`` (0=x, 1=y, 2=z), in the +direction when ``s`` is +1
    and reversed when -1. ``(1, 2, 3)`` is canonical.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray = field(repr=False)
    orientation: tuple[int, int, int] = IDENTITY_ORIENTATION
    dtype: str = "f32"

    def __post_init__(self):
        if self.data.shape != tuple(self.dims):
            raise ValueError(f"data shape {self.data.shape} != dims {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.dtype not in _VOLUME_DTYPES:
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if self.data.dtype != _VOLUME_DTYPES[self.dtype]:
            raise ValueError(f"data dtype {self.data.dtype} != declared {self.dtype}")
        axes = sorted(abs(o) for o in self.orientation)
        if axes != [1, 2, 3]:
            raise ValueError(f"orientation {self.orientation} is not a signed permutation")

    @property
    def is_canonical(self) -> bool:
        return self.orientation == IDENTITY_ORIENTATION and self.dtype == "f32"

    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


def volume_from_array(
    data: np.ndarray,
    spacing: Sequence[float] = (1.0, 1.0, 1.0),
    orientation: tuple[int, int, int] = IDENTITY_ORIENTATION,
) -> Volume3D:
    """Wrap an ``[x, y, z]``-indexed array in a Volume3D, inferring the dtype tag."""
    arr = np.asarray(data)
    tag = {np.uint8: "u8", np.int16: "i16", np.uint16: "u16", np.float32: "f32"}.get(arr.dtype.type)
    if tag is None:
        arr = arr.astype(np.float32)
        tag = "f32"
    return Volume3D(
        dims=tuple(arr.shape),
        spacing=(float(spacing[0]), float(spacing[1]), float(spacing[2])),
        data=arr,
        orientation=orientation,
        dtype=tag,
    )


# ---------------------------------------------------------------------------
# NIfTI-1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NiftiHeader:
    """The header subset this package reads and writes."""

    dim: tuple[int, ...]
    datatype: int
    pixdim: tuple[float, ...]
    vox_offset: int
    scl_slope: float
    scl_inter: float
    magic: bytes
    sizeof_hdr: int = 348


def _parse_nifti_header(raw: bytes) -> NiftiHeader:
    if len(raw) < 348:
        raise BadMagic("payload shorter than a NIfTI-1 header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    magic = raw[344:348]
    if sizeof_hdr != 348 or magic != b"n+1\x00":
        raise BadMagic(f"not single-file NIfTI-1 (sizeof_hdr={sizeof_hdr}, magic={magic!r})")
    dim = struct.unpack_from("<8h", raw, 40)
    (datatype,) = struct.unpack_from("<h", raw, 70)
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, 112)
    if dim[0] not in (3, 4):
        raise BadHeader(f"dim[0]={dim[0]} outside 3..4")
    if any(d < 1 for d in dim[1:4]):
        raise BadHeader(f"spatial dims {dim[1:4]} must be >= 1")
    if dim[0] == 4 and dim[4] > 1:
        raise BadHeader(f"4D volumes with dim[4]={dim[4]} > 1 are not supported")
    if datatype not in _NIFTI_DTYPES:
        raise UnsupportedDatatype(f"NIfTI datatype code {datatype}")
    offset = int(round(vox_offset))
    if offset < 352:
        raise BadHeader(f"vox_offset {offset} < 352")
    return NiftiHeader(
        dim=dim,
        datatype=datatype,
        pixdim=pixdim,
        vox_offset=offset,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        magic=magic,
    )


def read_nifti(payload: bytes) -> Volume3D:
    """Parse a single-file NIfTI-1 (optionally gzipped) into a canonical-dtype volume.

    Data is converted to float32 and scl_slope/scl_inter are applied when the
    slope is nonzero.
    """
    if payload[:2] == b"\x1f\x8b":
        payload = gzip.decompress(payload)
    hdr = _parse_nifti_header(payload)
    nx, ny, nz = hdr.dim[1], hdr.dim[2], hdr.dim[3]
    np_dtype = np.dtype(_NIFTI_DTYPES[hdr.datatype]).newbyteorder("<")
    count = nx * ny * nz
    nbytes = count * np_dtype.itemsize
    body = payload[hdr.vox_offset : hdr.vox_offset + nbytes]
    if len(body) < nbytes:
        raise TruncatedData(f"expected {nbytes} data bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype=np_dtype, count=count)
    data = flat.reshape((nx, ny, nz), order="F").astype(np.float32)
    if hdr.scl_slope != 0.0 and (hdr.scl_slope, hdr.scl_inter) != (1.0, 0.0):
        data = data * np.float32(hdr.scl_slope) + np.float32(hdr.scl_inter)
    spacing = tuple(float(p) if p > 0 else 1.0 for p in hdr.pixdim[1:4])
    return Volume3D(dims=(nx, ny, nz), spacing=spacing, data=data, dtype="f32")


def write_nifti(v: Volume3D) -> bytes:
    """Serialize to single-file NIfTI-1 bytes.

    float volumes are written as float32; u8 volumes (label maps) keep their
    integer values exactly. scl_slope/scl_inter are written as 1/0.
    """
    if v.orientation != IDENTITY_ORIENTATION:
        raise ValueError("write_nifti requires identity orientation; canonicalize first")
    if v.dtype == "u8":
        datatype, bitpix = 2, 8
        data = v.data
    else:
        datatype, bitpix = 16, 32
        data = v.data.astype(np.float32, copy=False)

    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, v.dims[0], v.dims[1], v.dims[2], 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into(
        "<8f", hdr, 76, 1.0, v.spacing[0], v.spacing[1], v.spacing[2], 0.0, 0.0, 0.0, 0.0
    )
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    descrip = b"gliopipe"
    hdr[148 : 148 + len(descrip)] = descrip
    hdr[344:348] = b"n+1\x00"
    return bytes(hdr) + b"\x00\x00\x00\x00" + data.tobytes(order="F")


# ---------------------------------------------------------------------------
# DICOM (explicit VR little endian, uncompressed)
# ---------------------------------------------------------------------------

@dataclass
class DicomSlice:
    rows: int
    cols: int
    instance_number: int
    image_position: Optional[tuple[float, float, float]]
    orientation_cosines: tuple[float, ...]
    pixel_spacing: tuple[float, float]
    slice_thickness: float
    pixel_data: np.ndarray  # (rows, cols)

    def __post_init__(self):
        if self.pixel_data.shape != (self.rows, self.cols):
            raise ValueError("pixel_data shape does not match rows/cols")


_LONG_VRS = {b"OB", b"OW", b"OF", b"SQ", b"UT", b"UN"}

# (group, element) -> short name; the full set of tags this reader consumes
_WANTED = {
    (0x0028, 0x0010): "rows",
    (0x0028, 0x0011): "cols",
    (0x0020, 0x0013): "instance",
    (0x0020, 0x0032): "position",
    (0x0020, 0x0037): "orientation",
    (0x0028, 0x0030): "pixel_spacing",
    (0x0018, 0x0050): "thickness",
    (0x0028, 0x0100): "bits_allocated",
    (0x0028, 0x0103): "pixel_representation",
    (0x7FE0, 0x0010): "pixel_data",
}


def _skip_undefined_sequence(buf: bytes, pos: int) -> int:
    """Skip an undefined-length SQ payload; returns the offset past its delimiter."""
    while pos + 8 <= len(buf):
        group, elem = struct.unpack_from("<HH", buf, pos)
        (length,) = struct.unpack_from("<I", buf, pos + 4)
        pos += 8
        if (group, elem) == (0xFFFE, 0xE0DD):  # sequence delimitation
            return pos
        if (group, elem) == (0xFFFE, 0xE000):  # item
            if length == 0xFFFFFFFF:
                pos = _skip_undefined_item(buf, pos)
            else:
                pos += length
        else:
            raise NotDicom("malformed sequence structure")
    raise NotDicom("unterminated sequence")


def _skip_undefined_item(buf: bytes, pos: int) -> int:
    """Skip an undefined-length item by walking its nested elements."""
    while pos + 8 <= len(buf):
        group, elem = struct.unpack_from("<HH", buf, pos)
        if (group, elem) == (0xFFFE, 0xE00D):  # item delimitation
            return pos + 8
        pos = _skip_element(buf, pos)
    raise NotDicom("unterminated item")


def _skip_element(buf: bytes, pos: int) -> int:
    _, _, vr, length, value_at = _read_element_head(buf, pos)
    if length == 0xFFFFFFFF:
        if vr == b"SQ" or vr == b"UN":
            return _skip_undefined_sequence(buf, value_at)
        raise UnsupportedTransferSyntax("undefined-length non-sequence element")
    return value_at + length


def _read_element_head(buf: bytes, pos: int):
    if pos + 8 > len(buf):
        raise NotDicom("truncated element header")
    group, elem = struct.unpack_from("<HH", buf, pos)
    vr = buf[pos + 4 : pos + 6]
    if vr in _LONG_VRS:
        (length,) = struct.unpack_from("<I", buf, pos + 8)
        value_at = pos + 12
    else:
        (length,) = struct.unpack_from("<H", buf, pos + 6)
        value_at = pos + 8
    return group, elem, vr, length, value_at


def _decode_value(vr: bytes, raw: bytes):
    if vr == b"US":
        return struct.unpack("<H", raw[:2])[0]
    if vr in (b"DS", b"IS", b"LO", b"SH", b"CS", b"UI", b"DA", b"TM", b"PN", b"AS"):
        text = raw.decode("ascii", errors="replace").strip("\x00 ")
        if vr == b"DS":
            return [float(t) for t in text.split("\\") if t != ""]
        if vr == b"IS":
            return [int(t) for t in text.split("\\") if t != ""]
        return text
    return raw


def _parse_dicom_file(payload: bytes, fallback_instance: int) -> DicomSlice:
    if len(payload) < 132 or payload[128:132] != b"DICM":
        raise NotDicom("missing DICM marker")
    pos = 132
    transfer_syntax = None
    # file meta group (0002,xxxx) is always explicit VR little endian
    while pos + 8 <= len(payload):
        group, elem, vr, length, value_at = _read_element_head(payload, pos)
        if group != 0x0002:
            break
        raw = payload[value_at : value_at + length]
        if elem == 0x0010:
            transfer_syntax = raw.decode("ascii").strip("\x00 ")
        pos = value_at + length
    if transfer_syntax != EXPLICIT_VR_LITTLE_ENDIAN:
        raise UnsupportedTransferSyntax(f"transfer syntax {transfer_syntax!r}")

    found: dict = {}
    while pos + 8 <= len(payload):
        group, elem, vr, length, value_at = _read_element_head(payload, pos)
        if length == 0xFFFFFFFF:
            if (group, elem) == (0x7FE0, 0x0010):
                raise UnsupportedTransferSyntax("encapsulated (compressed) pixel data")
            pos = _skip_element(payload, pos)
            continue
        key = _WANTED.get((group, elem))
        if key is not None:
            raw = payload[value_at : value_at + length]
            if len(raw) < length:
                raise NotDicom("truncated element value")
            found[key] = raw if key == "pixel_data" else _decode_value(vr, raw)
        pos = value_at + length

    if "pixel_data" not in found or "rows" not in found or "cols" not in found:
        raise NotDicom("missing Rows/Columns/PixelData")
    rows, cols = int(found["rows"]), int(found["cols"])
    bits = int(found.get("bits_allocated", 16))
    signed = int(found.get("pixel_representation", 0)) == 1
    if bits == 8:
        dtype = np.uint8
    elif bits == 16:
        dtype = np.int16 if signed else np.uint16
    else:
        raise UnsupportedTransferSyntax(f"BitsAllocated {bits}")
    need = rows * cols * np.dtype(dtype).itemsize
    raw = found["pixel_data"]
    if len(raw) < need:
        raise TruncatedData(f"pixel data holds {len(raw)} bytes, need {need}")
    pixels = np.frombuffer(raw[:need], dtype=np.dtype(dtype).newbyteorder("<")).reshape(rows, cols)

    instance = found.get("instance")
    instance_number = int(instance[0]) if instance else fallback_instance
    position = found.get("position")
    pos3 = tuple(position[:3]) if position and len(position) >= 3 else None
    orient = found.get("orientation")
    cosines = tuple(orient[:6]) if orient and len(orient) >= 6 else (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    ps = found.get("pixel_spacing")
    pixel_spacing = (float(ps[0]), float(ps[1])) if ps and len(ps) >= 2 else (1.0, 1.0)
    thickness = found.get("thickness")
    slice_thickness = float(thickness[0]) if thickness else 1.0

    return DicomSlice(
        rows=rows,
        cols=cols,
        instance_number=instance_number,
        image_position=pos3,
        orientation_cosines=cosines,
        pixel_spacing=pixel_spacing,
        slice_thickness=slice_thickness,
        pixel_data=pixels,
    )


def _signed_axis(vec: np.ndarray) -> Optional[int]:
    """Return +-(axis+1) when vec is axis-aligned within 1e-3, else None."""
    a = int(np.argmax(np.abs(vec)))
    if abs(abs(vec[a]) - 1.0) > 1e-3 or np.sum(np.abs(vec)) > 1.0 + 1e-3:
        return None
    return (a + 1) if vec[a] > 0 else -(a + 1)


def read_dicom_series(files: Sequence[bytes]) -> Volume3D:
    """Stack one explicit-VR-LE DICOM series into a Volume3D.

    Slices are ordered by image position projected on the slice normal,
    falling back to instance number. Geometry must be consistent across the
    series, otherwise MixedSeries is raised.
    """
    if not files:
        raise NotDicom("empty series")
    slices = [_parse_dicom_file(f, i) for i, f in enumerate(files)]

    first = slices[0]
    for s in slices[1:]:
        if (s.rows, s.cols) != (first.rows, first.cols):
            raise MixedSeries(f"rows/cols {s.rows}x{s.cols} != {first.rows}x{first.cols}")
        if not np.allclose(s.pixel_spacing, first.pixel_spacing, atol=1e-6):
            raise MixedSeries("pixel spacing differs across slices")
        if not np.allclose(s.orientation_cosines, first.orientation_cosines, atol=1e-6):
            raise MixedSeries("image orientation differs across slices")

    row_dir = np.asarray(first.orientation_cosines[:3], dtype=np.float64)
    col_dir = np.asarray(first.orientation_cosines[3:6], dtype=np.float64)
    normal = np.cross(row_dir, col_dir)

    have_positions = all(s.image_position is not None for s in slices)
    if have_positions and np.linalg.norm(normal) > 1e-6:
        keys = [float(np.dot(s.image_position, normal)) for s in slices]
        if len(set(keys)) == len(keys):
            order = np.argsort(keys, kind="stable")
        else:
            order = np.argsort([s.instance_number for s in slices], kind="stable")
    else:
        keys = None
        order = np.argsort([s.instance_number for s in slices], kind="stable")
    slices = [slices[i] for i in order]

    if keys is not None and len(slices) > 1:
        sorted_keys = sorted(keys)
        deltas = np.diff(sorted_keys)
        dz = float(np.median(np.abs(deltas)))
        if dz <= 0:
            dz = first.slice_thickness or 1.0
    else:
        dz = first.slice_thickness or 1.0

    stack = np.stack([s.pixel_data for s in slices], axis=0)  # (nz, rows, cols)
    data = np.ascontiguousarray(stack.transpose(2, 1, 0))  # (x=cols, y=rows, z)

    ox = _signed_axis(row_dir)
    oy = _signed_axis(col_dir)
    oz = _signed_axis(normal / max(np.linalg.norm(normal), 1e-12))
    if ox and oy and oz and len({abs(ox), abs(oy), abs(oz)}) == 3:
        orientation = (ox, oy, oz)
    else:
        orientation = IDENTITY_ORIENTATION

    # PixelSpacing is (row spacing, col spacing) = (y, x)
    sy, sx = first.pixel_spacing
    return volume_from_array(data, spacing=(sx, sy, dz), orientation=orientation)


# ---------------------------------------------------------------------------
# canonical frame
# ---------------------------------------------------------------------------

def canonicalize(v: Volume3D) -> Volume3D:
    """Permute/flip into identity orientation and convert data to float32. Idempotent."""
    if v.is_canonical:
        return v
    perm = [0, 0, 0]
    signs = [1, 1, 1]
    for stored_axis, o in enumerate(v.orientation):
        canonical_axis = abs(o) - 1
        perm[canonical_axis] = stored_axis
        signs[canonical_axis] = 1 if o > 0 else -1
    data = np.transpose(v.data, axes=perm)
    for axis, s in enumerate(signs):
        if s < 0:
            data = np.flip(data, axis=axis)
    data = np.ascontiguousarray(data, dtype=np.float32)
    dims = tuple(v.dims[p] for p in perm)
    spacing = tuple(v.spacing[p] for p in perm)
    return Volume3D(dims=dims, spacing=spacing, data=data, dtype="f32")


def as_labels(v: Volume3D) -> Volume3D:
    """Cast an integer-valued volume to the u8 label dtype (values preserved)."""
    data = np.rint(v.data).astype(np.uint8)
    return replace(v, data=data, dtype="u8")
