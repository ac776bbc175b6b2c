"""Slice rasters: PNG validity, deterministic bytes, palette blending."""
import struct
import zlib

import numpy as np
import pytest

from gliopipe.render import PALETTE, axis_length, render_slice, slice_png, write_png


def parse_png(payload: bytes):
    assert payload[:8] == b"\x89PNG\r\n\x1a\n"
    pos = 8
    chunks = {}
    while pos < len(payload):
        (length,) = struct.unpack_from(">I", payload, pos)
        tag = payload[pos + 4 : pos + 8]
        body = payload[pos + 8 : pos + 8 + length]
        crc = struct.unpack_from(">I", payload, pos + 8 + length)[0]
        assert zlib.crc32(tag + body) & 0xFFFFFFFF == crc
        chunks[tag] = body
        pos += 12 + length
    return chunks


class TestPng:
    def test_decodes_back_to_pixels(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
        chunks = parse_png(write_png(img))
        w, h = struct.unpack_from(">II", chunks[b"IHDR"], 0)
        assert (w, h) == (7, 5)
        raw = zlib.decompress(chunks[b"IDAT"])
        rows = np.frombuffer(raw, dtype=np.uint8).reshape(5, 1 + 7 * 3)
        assert np.all(rows[:, 0] == 0)  # filter byte
        assert np.array_equal(rows[:, 1:].reshape(5, 7, 3), img)

    def test_deterministic_bytes(self):
        img = np.random.default_rng(1).integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
        assert write_png(img) == write_png(img)


class TestRenderSlice:
    def _volume(self):
        rng = np.random.default_rng(2)
        return rng.uniform(0, 100, size=(6, 7, 8)).astype(np.float32)

    def test_axis_lengths(self):
        assert axis_length((6, 7, 8), "axial") == 8
        assert axis_length((6, 7, 8), "coronal") == 7
        assert axis_length((6, 7, 8), "sagittal") == 6

    def test_axial_raster_shape_and_content(self):
        vol = self._volume()
        img = render_slice(vol, "axial", 3)
        assert img.shape == (7, 6, 3)  # rows=y, cols=x
        lo, hi = float(vol.min()), float(vol.max())
        want = int(np.clip((vol[2, 5, 3] - lo) / (hi - lo), 0, 1) * 255 + 0.5)
        assert img[5, 2, 0] == want

    def test_out_of_range_raises(self):
        vol = self._volume()
        with pytest.raises(IndexError):
            render_slice(vol, "axial", 8)
        render_slice(vol, "axial", 7)  # last slice fine

    def test_overlay_palette_blend(self):
        vol = np.zeros((4, 4, 4), dtype=np.float32)
        labels = np.zeros((4, 4, 4), dtype=np.uint8)
        labels[1, 2, 0] = 4
        img = render_slice(vol, "axial", 0, labels=labels, overlay=True, alpha=1.0)
        assert tuple(img[2, 1]) == PALETTE[4]  # yellow at full opacity
        half = render_slice(vol, "axial", 0, labels=labels, overlay=True, alpha=0.5)
        assert tuple(half[2, 1]) == (128, 128, 0)  # gray 0 blended half with yellow

    def test_overlay_off_identical_to_no_labels(self):
        vol = self._volume()
        labels = np.zeros((6, 7, 8), dtype=np.uint8)
        labels[2, 2, 2] = 2
        a = slice_png(vol, "axial", 2)
        b = slice_png(vol, "axial", 2, labels=labels, overlay=False, alpha=0.8)
        assert a == b

    def test_alpha_zero_equals_overlay_off(self):
        vol = self._volume()
        labels = np.zeros((6, 7, 8), dtype=np.uint8)
        labels[1:4, 1:4, 2] = 1
        on = slice_png(vol, "axial", 2, labels=labels, overlay=True, alpha=0.0)
        off = slice_png(vol, "axial", 2)
        assert on == off

    def test_constant_volume_renders_black(self):
        vol = np.full((4, 4, 4), 9.0, dtype=np.float32)
        img = render_slice(vol, "coronal", 1)
        assert np.all(img == 0)
