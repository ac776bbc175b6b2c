"""Seven-level 3D U-Net: three encoder levels, a bottleneck, three decoder levels.

Each level runs two 3x3x3 convolutions with instance norm and leaky ReLU;
downsampling is 2x2x2 max pooling, upsampling a 2x2x2 transposed convolution,
and skips concatenate encoder features ahead of the decoder convolutions.
Filters double per level from ``base_filters``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..tensor import checkpoint as ckpt
from ..tensor.layers import (
    Conv3d,
    InstanceNorm3d,
    Layer,
    LeakyReLU,
    MaxPool3d,
    Param,
    Sequential,
    TransposedConv3d,
)
from ..tensor import ops

DOWNSAMPLE_FACTOR = 8  # three 2x pooling stages


@dataclass(frozen=True)
class UNet7Config:
    in_channels: int = 4
    num_classes: int = 4
    base_filters: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.in_channels not in (3, 4):
            raise ValueError("in_channels must be 3 or 4")
        if self.base_filters < 1:
            raise ValueError("base_filters must be >= 1")


def _conv_block(cin: int, cout: int, rng: np.random.Generator) -> Sequential:
    # no conv bias: instance norm cancels any constant offset anyway
    return Sequential([
        Conv3d(cin, cout, k=3, stride=1, pad=1, bias=False, rng=rng),
        InstanceNorm3d(cout),
        LeakyReLU(),
        Conv3d(cout, cout, k=3, stride=1, pad=1, bias=False, rng=rng),
        InstanceNorm3d(cout),
        LeakyReLU(),
    ])


class UNet7(Layer):
    name = "unet7"

    def __init__(self, config: UNet7Config = UNet7Config()):
        self.config = config
        f = config.base_filters

        def rng(i: int) -> np.random.Generator:
            return np.random.default_rng([config.seed, i])

        self.enc = [
            _conv_block(config.in_channels, f, rng(0)),
            _conv_block(f, 2 * f, rng(1)),
            _conv_block(2 * f, 4 * f, rng(2)),
        ]
        self.pools = [MaxPool3d(), MaxPool3d(), MaxPool3d()]
        self.bottleneck = _conv_block(4 * f, 8 * f, rng(3))
        self.ups = [
            TransposedConv3d(8 * f, 4 * f, rng=rng(4)),
            TransposedConv3d(4 * f, 2 * f, rng=rng(5)),
            TransposedConv3d(2 * f, f, rng=rng(6)),
        ]
        self.dec = [
            _conv_block(8 * f, 4 * f, rng(7)),
            _conv_block(4 * f, 2 * f, rng(8)),
            _conv_block(2 * f, f, rng(9)),
        ]
        self.head = Conv3d(f, config.num_classes, k=1, stride=1, pad=0, rng=rng(10))
        self._concat_caches: list = []

    def params(self) -> list[Param]:
        out: list[Param] = []
        for block in self.enc:
            out.extend(block.params())
        out.extend(self.bottleneck.params())
        for up, block in zip(self.ups, self.dec):
            out.extend(up.params())
            out.extend(block.params())
        out.extend(self.head.params())
        return out

    def num_params(self) -> int:
        return sum(p.value.size for p in self.params())

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 5 or x.shape[1] != self.config.in_channels:
            raise ShapeMismatch(f"expected (1, {self.config.in_channels}, D, H, W), got {x.shape}")
        if any(d % DOWNSAMPLE_FACTOR or d < DOWNSAMPLE_FACTOR for d in x.shape[2:]):
            raise ShapeMismatch(f"spatial dims {x.shape[2:]} must be multiples of {DOWNSAMPLE_FACTOR}")
        skips = []
        h = x
        for block, pool in zip(self.enc, self.pools):
            h = block.forward(h)
            skips.append(h)
            h = pool.forward(h)
        h = self.bottleneck.forward(h)
        self._concat_caches = []
        for up, block, skip in zip(self.ups, self.dec, reversed(skips)):
            h = up.forward(h)
            h, cache = ops.concat_forward([skip, h], axis=1)
            self._concat_caches.append(cache)
            h = block.forward(h)
        return self.head.forward(h)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.head.backward(grad_out)
        skip_grads = []
        for up, block, cache in zip(reversed(self.ups), reversed(self.dec), reversed(self._concat_caches)):
            g = block.backward(g)
            gskip, g = ops.concat_backward(g, cache)
            skip_grads.append(gskip)
            g = up.backward(g)
        g = self.bottleneck.backward(g)
        # backward walked the decoder shallow-first, so skip_grads holds
        # encoder levels 0, 1, 2; the encoder unwinds deepest-first
        for block, pool, gskip in zip(reversed(self.enc), reversed(self.pools), reversed(skip_grads)):
            g = pool.backward(g)
            g = g + gskip
            g = block.backward(g)
        return g

    def predict_dense(self, x: np.ndarray) -> np.ndarray:
        """Argmax class map (D, H, W) from a single-sample input."""
        logits = self.forward(x)
        return np.argmax(logits[0], axis=0)

    # --- persistence ---

    def descriptor(self) -> dict:
        return {
            "kind": "unet7",
            "in_channels": self.config.in_channels,
            "num_classes": self.config.num_classes,
            "base_filters": self.config.base_filters,
            "seed": self.config.seed,
        }

    def to_bytes(self, extra: dict | None = None) -> bytes:
        desc = self.descriptor()
        if extra:
            desc.update(extra)
        arrays = [(f"p{i}", p.value) for i, p in enumerate(self.params())]
        return ckpt.dump_checkpoint(desc, arrays)

    def load_arrays(self, arrays: list[tuple[str, np.ndarray]]):
        params = self.params()
        if len(arrays) != len(params):
            raise ShapeMismatch(f"{len(arrays)} blobs for {len(params)} parameters")
        for p, (_, a) in zip(params, arrays):
            if a.shape != p.value.shape:
                raise ShapeMismatch(f"blob {a.shape} != param {p.value.shape}")
            p.value = a.astype(np.float32)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "UNet7":
        desc, arrays = ckpt.parse_checkpoint(payload)
        if desc.get("kind") != "unet7":
            raise ShapeMismatch(f"checkpoint kind {desc.get('kind')!r} is not unet7")
        model = cls(UNet7Config(
            in_channels=int(desc["in_channels"]),
            num_classes=int(desc["num_classes"]),
            base_filters=int(desc["base_filters"]),
            seed=int(desc.get("seed", 0)),
        ))
        model.load_arrays(arrays)
        return model
