"""Single-modality 3D residual classifier for methylation prediction.

Smallest-variant residual network: a conv stem, one or more residual stages
(identity shortcuts, 1x1x1 projection when channels change), max-pool
downsampling between stages, global average pooling, and one linear logit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..tensor import checkpoint as ckpt
from ..tensor import ops
from ..tensor.layers import (
    Conv3d,
    GlobalAvgPool3d,
    InstanceNorm3d,
    Layer,
    Linear,
    MaxPool3d,
    Param,
    ReLU,
)


@dataclass(frozen=True)
class ResClassifierConfig:
    in_channels: int = 1
    base_filters: int = 8
    blocks_per_stage: tuple[int, ...] = (1, 1, 1, 1)
    input_size: tuple[int, int, int] = (64, 256, 256)  # (D, H, W) after slice window + resize
    seed: int = 0

    def __post_init__(self):
        if self.in_channels != 1:
            raise ValueError("classifier takes one modality channel")
        if not self.blocks_per_stage or any(b < 1 for b in self.blocks_per_stage):
            raise ValueError("blocks_per_stage must be nonempty positive ints")


class ResidualBlock(Layer):
    name = "residual_block"

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.conv1 = Conv3d(cin, cout, k=3, stride=1, pad=1, bias=False, rng=rng)
        self.norm1 = InstanceNorm3d(cout)
        self.act1 = ReLU()
        self.conv2 = Conv3d(cout, cout, k=3, stride=1, pad=1, bias=False, rng=rng)
        self.norm2 = InstanceNorm3d(cout)
        self.proj = Conv3d(cin, cout, k=1, stride=1, pad=0, bias=False, rng=rng) if cin != cout else None
        self.act_out = ReLU()

    def params(self):
        out = self.conv1.params() + self.norm1.params() + self.conv2.params() + self.norm2.params()
        if self.proj is not None:
            out.extend(self.proj.params())
        return out

    def forward(self, x):
        h = self.act1.forward(self.norm1.forward(self.conv1.forward(x)))
        h = self.norm2.forward(self.conv2.forward(h))
        shortcut = self.proj.forward(x) if self.proj is not None else x
        return self.act_out.forward(h + shortcut)

    def backward(self, grad_out):
        g = self.act_out.backward(grad_out)
        gshort = self.proj.backward(g) if self.proj is not None else g
        gh = self.norm2.backward(g)
        gh = self.conv2.backward(gh)
        gh = self.act1.backward(gh)
        gh = self.norm1.backward(gh)
        gh = self.conv1.backward(gh)
        return gh + gshort


class ResClassifier3D(Layer):
    name = "res_classifier3d"

    def __init__(self, config: ResClassifierConfig = ResClassifierConfig()):
        self.config = config
        f = config.base_filters

        def rng(i: int) -> np.random.Generator:
            return np.random.default_rng([config.seed, 1000 + i])

        self.stem = Conv3d(config.in_channels, f, k=3, stride=1, pad=1, bias=False, rng=rng(0))
        self.stem_norm = InstanceNorm3d(f)
        self.stem_act = ReLU()
        self.stages: list[list[Layer]] = []
        self.pools: list[MaxPool3d] = []
        cin = f
        layer_idx = 1
        for s, nblocks in enumerate(config.blocks_per_stage):
            cout = f * (2 ** s)
            blocks: list[Layer] = []
            for _ in range(nblocks):
                blocks.append(ResidualBlock(cin, cout, rng(layer_idx)))
                cin = cout
                layer_idx += 1
            self.stages.append(blocks)
            if s < len(config.blocks_per_stage) - 1:
                self.pools.append(MaxPool3d())
        self.gap = GlobalAvgPool3d()
        self.fc = Linear(cin, 1, rng=rng(layer_idx))

    def params(self) -> list[Param]:
        out = self.stem.params() + self.stem_norm.params()
        for blocks in self.stages:
            for b in blocks:
                out.extend(b.params())
        out.extend(self.fc.params())
        return out

    def num_params(self) -> int:
        return sum(p.value.size for p in self.params())

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 5 or x.shape[1] != 1:
            raise ShapeMismatch(f"expected (N, 1, D, H, W), got {x.shape}")
        down = 2 ** (len(self.stages) - 1)
        if any(d % down or d < down for d in x.shape[2:]):
            raise ShapeMismatch(f"spatial dims {x.shape[2:]} must be multiples of {down}")
        h = self.stem_act.forward(self.stem_norm.forward(self.stem.forward(x)))
        for s, blocks in enumerate(self.stages):
            for b in blocks:
                h = b.forward(h)
            if s < len(self.pools):
                h = self.pools[s].forward(h)
        h = self.gap.forward(h)
        return self.fc.forward(h)  # (N, 1) logits

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        g = self.fc.backward(grad_out)
        g = self.gap.backward(g)
        for s in range(len(self.stages) - 1, -1, -1):
            if s < len(self.pools):
                g = self.pools[s].backward(g)
            for b in reversed(self.stages[s]):
                g = b.backward(g)
        g = self.stem_act.backward(g)
        g = self.stem_norm.backward(g)
        return self.stem.backward(g)

    def logit(self, x: np.ndarray) -> float:
        return float(self.forward(x)[0, 0])

    def probability(self, x: np.ndarray) -> float:
        y, _ = ops.sigmoid_forward(np.array([self.logit(x)], dtype=np.float64))
        return float(y[0])

    # --- persistence ---

    def descriptor(self) -> dict:
        return {
            "kind": "res_classifier3d",
            "base_filters": self.config.base_filters,
            "blocks_per_stage": list(self.config.blocks_per_stage),
            "input_size": list(self.config.input_size),
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
    def from_bytes(cls, payload: bytes) -> tuple["ResClassifier3D", dict]:
        desc, arrays = ckpt.parse_checkpoint(payload)
        if desc.get("kind") != "res_classifier3d":
            raise ShapeMismatch(f"checkpoint kind {desc.get('kind')!r} is not res_classifier3d")
        model = cls(ResClassifierConfig(
            base_filters=int(desc["base_filters"]),
            blocks_per_stage=tuple(int(b) for b in desc["blocks_per_stage"]),
            input_size=tuple(int(d) for d in desc["input_size"]),
            seed=int(desc.get("seed", 0)),
        ))
        model.load_arrays(arrays)
        return model, desc
