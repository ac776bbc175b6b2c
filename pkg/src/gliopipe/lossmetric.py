"""Losses (soft Dice, weighted focal, combo, BCE) and metrics (Dice, AUROC, accuracy).

Loss functions return ``(value, grad_wrt_probs)`` so the caller backpropagates
the gradient through its own softmax. The tumor regions are overlapping label
unions; the tumor-core definition is selectable because the common convention
({1, 4}) and the definition this package defaults to ({2, 4}) disagree.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DimMismatch, IllegalLabel, ShapeMismatch, SingleClass
from .volio import Volume3D

RAW_LABELS = (0, 1, 2, 4)
DENSE_FROM_RAW = {0: 0, 1: 1, 2: 2, 4: 3}
RAW_FROM_DENSE = {0: 0, 1: 1, 2: 2, 3: 4}

REGIONS_PAPER = {"ET": (4,), "TC": (2, 4), "WT": (1, 2, 4)}
REGIONS_STANDARD = {"ET": (4,), "TC": (1, 4), "WT": (1, 2, 4)}


@dataclass(frozen=True)
class LabelScheme:
    region_source: str = "paper"  # "paper" | "standard"

    def __post_init__(self):
        if self.region_source not in ("paper", "standard"):
            raise ValueError(f"unknown region source {self.region_source!r}")

    @property
    def regions(self) -> dict[str, tuple[int, ...]]:
        return REGIONS_PAPER if self.region_source == "paper" else REGIONS_STANDARD

    @staticmethod
    def to_dense(raw: np.ndarray) -> np.ndarray:
        _check_labels(raw)
        dense = raw.astype(np.int64, copy=True)
        dense[dense == 4] = 3
        return dense

    @staticmethod
    def to_raw(dense: np.ndarray) -> np.ndarray:
        raw = np.asarray(dense).astype(np.uint8, copy=True)
        raw[raw == 3] = 4
        return raw

    @staticmethod
    def one_hot(dense: np.ndarray, num_classes: int = 4, dtype=np.float32) -> np.ndarray:
        """(D, H, W) dense labels -> (1, C, D, H, W) one-hot."""
        out = np.zeros((num_classes,) + dense.shape, dtype=dtype)
        for c in range(num_classes):
            out[c] = dense == c
        return out[None, ...]


def _check_labels(arr: np.ndarray):
    vals = np.unique(np.rint(np.asarray(arr)))
    bad = set(int(v) for v in vals) - set(RAW_LABELS)
    if bad:
        raise IllegalLabel(f"labels outside {{0,1,2,4}}: {sorted(bad)}")


@dataclass(frozen=True)
class LossConfig:
    dice_smooth: float = 1e-5
    focal_gamma: float = 2.0
    class_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    combo_focal_weight: float = 1.0

    def __post_init__(self):
        if self.dice_smooth <= 0:
            raise ValueError("dice_smooth must be > 0")
        if self.focal_gamma < 0:
            raise ValueError("focal_gamma must be >= 0")
        if any(w < 0 for w in self.class_weights) or not any(w > 0 for w in self.class_weights):
            raise ValueError("class weights must be nonnegative with at least one > 0")


def _check_probs_target(probs: np.ndarray, target: np.ndarray):
    if probs.ndim != 5 or target.shape != probs.shape:
        raise ShapeMismatch(f"probs {probs.shape} vs target {target.shape}")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def soft_dice_loss(probs: np.ndarray, target: np.ndarray, cfg: LossConfig = LossConfig()):
    """1 - mean over foreground classes of (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)."""
    _check_probs_target(probs, target)
    eps = cfg.dice_smooth
    nfg = probs.shape[1] - 1
    if nfg < 1:
        raise ShapeMismatch("need at least one foreground class")
    grad = np.zeros_like(probs)
    total = 0.0
    for c in range(1, probs.shape[1]):
        p = probs[:, c]
        g = target[:, c]
        inter = float((p * g).sum())
        denom = float(p.sum() + g.sum()) + eps
        num = 2.0 * inter + eps
        total += num / denom
        # d(num/denom)/dp = (2g*denom - num) / denom^2
        grad[:, c] = -(2.0 * g * denom - num) / (denom * denom) / nfg
    loss = 1.0 - total / nfg
    return loss, grad


def weighted_focal_loss(probs: np.ndarray, target: np.ndarray, cfg: LossConfig = LossConfig()):
    """Mean over voxels of -w_c * (1 - p_true)^gamma * log(p_true)."""
    _check_probs_target(probs, target)
    nclasses = probs.shape[1]
    if len(cfg.class_weights) < nclasses:
        raise ShapeMismatch(f"{len(cfg.class_weights)} class weights for {nclasses} classes")
    gamma = cfg.focal_gamma
    w = np.asarray(cfg.class_weights[:nclasses], dtype=probs.dtype).reshape(1, nclasses, 1, 1, 1)
    p_true = (probs * target).sum(axis=1, keepdims=True)
    w_true = (w * target).sum(axis=1, keepdims=True)
    clamped = (p_true < 1e-7) | (p_true > 1.0 - 1e-7)
    p = np.clip(p_true, 1e-7, 1.0 - 1e-7)
    nvox = p.size
    focal = -w_true * (1.0 - p) ** gamma * np.log(p)
    loss = float(focal.sum()) / nvox
    # d/dp [-w (1-p)^g log p] = w*g*(1-p)^(g-1)*log(p) - w*(1-p)^g / p
    if gamma == 0.0:
        dfdp = -w_true / p
    else:
        dfdp = w_true * gamma * (1.0 - p) ** (gamma - 1.0) * np.log(p) - w_true * (1.0 - p) ** gamma / p
    dfdp = np.where(clamped, 0.0, dfdp) / nvox
    grad = target * dfdp  # routes to the true-class coordinate of each voxel
    return loss, grad.astype(probs.dtype)


def combo_loss(probs: np.ndarray, target: np.ndarray, cfg: LossConfig = LossConfig()):
    """Soft Dice plus weighted focal, the deployed segmentation objective."""
    dice, gdice = soft_dice_loss(probs, target, cfg)
    focal, gfocal = weighted_focal_loss(probs, target, cfg)
    lam = cfg.combo_focal_weight
    return dice + lam * focal, gdice + lam * gfocal


def bce_loss(logit: float, label: int):
    """Numerically stable binary cross entropy on one logit; grad w.r.t. logit."""
    z = float(logit)
    y = float(label)
    loss = max(z, 0.0) - z * y + float(np.log1p(np.exp(-abs(z))))
    sig = 1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z))
    return loss, float(sig - y)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _as_label_array(v: Union[Volume3D, np.ndarray]) -> np.ndarray:
    arr = v.data if isinstance(v, Volume3D) else np.asarray(v)
    return np.rint(arr).astype(np.int64)


def dice_score(
    pred: Union[Volume3D, np.ndarray],
    truth: Union[Volume3D, np.ndarray],
    region: Sequence[int],
) -> float:
    """2|P∩G| / (|P|+|G|) after binarizing by region membership.

    Both empty -> 1.0 (no tumor, nothing missed); exactly one empty -> 0.0.
    """
    p = _as_label_array(pred)
    g = _as_label_array(truth)
    if p.shape != g.shape:
        raise DimMismatch(f"pred {p.shape} vs truth {g.shape}")
    _check_labels(p)
    _check_labels(g)
    pm = np.isin(p, region)
    gm = np.isin(g, region)
    psum = int(pm.sum())
    gsum = int(gm.sum())
    if psum == 0 and gsum == 0:
        return 1.0
    inter = int(np.logical_and(pm, gm).sum())
    return 2.0 * inter / (psum + gsum)


def region_dice(pred, truth, scheme: LabelScheme = LabelScheme()) -> dict[str, float]:
    return {name: dice_score(pred, truth, region) for name, region in scheme.regions.items()}


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney statistic: P(score_pos > score_neg) + 0.5 * P(tie)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeMismatch("scores and labels must be equal-length vectors")
    if not np.all(np.isin(y, (0, 1))):
        raise ShapeMismatch("labels must be binary 0/1")
    npos = int((y == 1).sum())
    nneg = int((y == 0).sum())
    if npos == 0 or nneg == 0:
        raise SingleClass("AUROC needs both classes")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    u = rank_sum_pos - npos * (npos + 1) / 2.0
    return u / (npos * nneg)


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of exact matches (voxelwise or casewise, caller's choice of input)."""
    p = np.asarray(pred)
    g = np.asarray(truth)
    if p.shape != g.shape:
        raise DimMismatch(f"pred {p.shape} vs truth {g.shape}")
    return float(np.mean(p == g))
