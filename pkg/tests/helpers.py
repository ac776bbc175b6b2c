"""Shared test utilities: synthetic NIfTI/DICOM byte builders and small oracles."""
from __future__ import annotations

import struct

import numpy as np

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"


def make_nifti_bytes(
    data: np.ndarray,
    spacing=(1.0, 1.0, 1.0),
    datatype: int | None = None,
    scl_slope: float = 1.0,
    scl_inter: float = 0.0,
    magic: bytes = b"n+1\x00",
    sizeof_hdr: int = 348,
    vox_offset: float = 352.0,
    dim0: int = 3,
) -> bytes:
    """Hand-assembled single-file NIfTI-1 stream (independent of the writer under test)."""
    dt_map = {np.uint8: 2, np.int16: 4, np.int32: 8, np.float32: 16, np.uint16: 512}
    if datatype is None:
        datatype = dt_map[data.dtype.type]
    bitpix = {2: 8, 4: 16, 8: 32, 16: 32, 512: 16}.get(datatype, 32)
    nx, ny, nz = data.shape
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, sizeof_hdr)
    struct.pack_into("<8h", hdr, 40, dim0, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, vox_offset)
    struct.pack_into("<2f", hdr, 112, scl_slope, scl_inter)
    hdr[344:348] = magic
    pad = b"\x00" * (int(vox_offset) - 348)
    return bytes(hdr) + pad + data.tobytes(order="F")


def _dcm_element(group: int, elem: int, vr: bytes, value: bytes) -> bytes:
    if len(value) % 2:
        value += b"\x00" if vr in (b"UI", b"OB") else b" "
    head = struct.pack("<HH", group, elem) + vr
    if vr in (b"OB", b"OW", b"OF", b"SQ", b"UT", b"UN"):
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    return head + struct.pack("<H", len(value)) + value


def make_dicom_bytes(
    pixels: np.ndarray,
    instance: int | None = 1,
    position=(0.0, 0.0, 0.0),
    orientation=(1, 0, 0, 0, 1, 0),
    pixel_spacing=(1.0, 1.0),
    thickness: float = 1.0,
    transfer_syntax: str = EXPLICIT_VR_LE,
    magic: bytes = b"DICM",
) -> bytes:
    """One explicit-VR little-endian Part-10 slice with the geometry tag subset."""
    rows, cols = pixels.shape
    meta = _dcm_element(0x0002, 0x0010, b"UI", transfer_syntax.encode())
    ds = b""
    ds += _dcm_element(0x0018, 0x0050, b"DS", f"{thickness}".encode())
    if instance is not None:
        ds += _dcm_element(0x0020, 0x0013, b"IS", f"{instance}".encode())
    if position is not None:
        ds += _dcm_element(0x0020, 0x0032, b"DS", "\\".join(f"{p}" for p in position).encode())
    ds += _dcm_element(0x0020, 0x0037, b"DS", "\\".join(f"{o}" for o in orientation).encode())
    ds += _dcm_element(0x0028, 0x0010, b"US", struct.pack("<H", rows))
    ds += _dcm_element(0x0028, 0x0011, b"US", struct.pack("<H", cols))
    ds += _dcm_element(0x0028, 0x0030, b"DS", f"{pixel_spacing[0]}\\{pixel_spacing[1]}".encode())
    if pixels.dtype == np.uint8:
        bits, rep = 8, 0
    elif pixels.dtype == np.int16:
        bits, rep = 16, 1
    elif pixels.dtype == np.uint16:
        bits, rep = 16, 0
    else:
        raise ValueError(f"unsupported test pixel dtype {pixels.dtype}")
    ds += _dcm_element(0x0028, 0x0100, b"US", struct.pack("<H", bits))
    ds += _dcm_element(0x0028, 0x0103, b"US", struct.pack("<H", rep))
    ds += _dcm_element(0x7FE0, 0x0010, b"OW", pixels.astype(pixels.dtype.newbyteorder("<")).tobytes())
    return b"\x00" * 128 + magic + meta + ds


def random_volume(rng: np.random.Generator, max_dim: int = 12) -> np.ndarray:
    dims = tuple(int(d) for d in rng.integers(2, max_dim + 1, size=3))
    return rng.standard_normal(dims).astype(np.float32)
