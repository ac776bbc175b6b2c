"""Finite-difference gradient verification.

Layers are checked in float64: analytic backward against central differences
with per-coordinate step 1e-3 * max(1, |x|), on up to 64 sampled coordinates
per tensor. Callers exclude kink-adjacent probes (ReLU at 0, maxpool ties)
via ``probe_ok``.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .layers import Layer

ProbeFilter = Callable[[str, np.ndarray, int], bool]


def to_double(layer: Layer) -> Layer:
    """Cast all parameters of a layer (tree) to float64, in place."""
    for p in layer.params():
        p.value = p.value.astype(np.float64)
        p.grad = None
    return layer


def check_gradients(
    loss_fn: Callable[[], float],
    wrt: Sequence[tuple[str, np.ndarray, np.ndarray]],
    rng: np.random.Generator,
    probes: int = 64,
    h_scale: float = 1e-3,
    probe_ok: Optional[ProbeFilter] = None,
) -> float:
    """Max relative error between analytic grads and central differences.

    ``wrt`` holds (name, array, analytic_grad) triples; the arrays are
    perturbed in place and restored. Relative error uses a 1e-6 floor so
    exact zeros do not blow up the ratio.
    """
    worst = 0.0
    for name, arr, grad in wrt:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        n = flat.size
        idxs = rng.choice(n, size=min(probes, n), replace=False)
        for idx in idxs:
            if probe_ok is not None and not probe_ok(name, arr, int(idx)):
                continue
            old = flat[idx]
            h = h_scale * max(1.0, abs(float(old)))
            flat[idx] = old + h
            lp = loss_fn()
            flat[idx] = old - h
            lm = loss_fn()
            flat[idx] = old
            numeric = (lp - lm) / (2.0 * h)
            analytic = float(gflat[idx])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, rel)
    return worst


def grad_check_layer(
    layer: Layer,
    input_shape: tuple[int, ...],
    rng: np.random.Generator,
    probes: int = 64,
    h_scale: float = 1e-3,
    probe_ok: Optional[ProbeFilter] = None,
    input_scale: float = 1.0,
) -> float:
    """Check one layer end to end via a random linear functional of its output."""
    to_double(layer)
    x = rng.standard_normal(input_shape) * input_scale
    y = layer.forward(x)
    r = rng.standard_normal(y.shape)

    def loss_fn() -> float:
        return float(np.sum(layer.forward(x) * r))

    layer.zero_grad()
    layer.forward(x)
    gx = layer.backward(r)
    wrt = [("input", x, gx)]
    for i, p in enumerate(layer.params()):
        wrt.append((f"param{i}:{p.name}", p.value, p.grad))
    return check_gradients(loss_fn, wrt, rng, probes=probes, h_scale=h_scale, probe_ok=probe_ok)
