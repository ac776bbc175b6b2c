"""Fold-by-modality stacking: 16-weight logistic regression over per-model
methylation probabilities, plus the full-case prediction path.

Feature order is fold-major, modality-minor: fold0:T1, fold0:T1CE, ...,
fold3:FLAIR. Missing modalities contribute a maximum-entropy 0.5 and are
flagged as imputed in the output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..errors import NoModalities, ShapeMismatch, SingleClass
from ..preproc import MODALITIES, NormVariant, SliceWindow, compute_norm_params, normalize, select_slice_window
from ..augment import resize_array
from ..volio import Volume3D, canonicalize
from .classifier import ResClassifier3D

DEFAULT_SLICE_WINDOW = SliceWindow(0.25, 0.75)


def ensemble_feature_order(n_folds: int = 4, modalities: Sequence[str] = MODALITIES) -> tuple[str, ...]:
    return tuple(f"fold{f}:{m}" for f in range(n_folds) for m in modalities)


@dataclass(frozen=True)
class EnsembleModel:
    weights: np.ndarray  # (F,) float64
    intercept: float
    feature_order: tuple[str, ...]

    def __post_init__(self):
        if self.weights.shape != (len(self.feature_order),):
            raise ValueError(
                f"{self.weights.shape[0] if self.weights.ndim == 1 else self.weights.shape} "
                f"weights for {len(self.feature_order)} features"
            )

    def decision(self, features: np.ndarray) -> float:
        f = np.asarray(features, dtype=np.float64)
        if f.shape != self.weights.shape:
            raise ShapeMismatch(f"features {f.shape} != weights {self.weights.shape}")
        return float(f @ self.weights + self.intercept)

    def predict_proba(self, features: np.ndarray) -> float:
        z = self.decision(features)
        return float(1.0 / (1.0 + np.exp(-z)) if z >= 0 else np.exp(z) / (1.0 + np.exp(z)))

    # --- 17-value text record ---

    def to_text(self) -> str:
        lines = ["# gliopipe ensemble v1", "# features: " + " ".join(self.feature_order)]
        lines += [repr(float(w)) for w in self.weights]
        lines.append(repr(float(self.intercept)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EnsembleModel":
        lines = [ln.strip() for ln in text.strip().splitlines()]
        header = [ln for ln in lines if ln.startswith("#")]
        values = [float(ln) for ln in lines if not ln.startswith("#")]
        order: tuple[str, ...] = ()
        for ln in header:
            if ln.startswith("# features:"):
                order = tuple(ln.split(":", 1)[1].split())
        if not order or len(values) != len(order) + 1:
            raise ValueError("malformed ensemble record")
        return cls(weights=np.asarray(values[:-1], dtype=np.float64),
                   intercept=values[-1], feature_order=order)


def fit_logistic_ensemble(
    features: np.ndarray,
    labels: Sequence[int],
    feature_order: Optional[Sequence[str]] = None,
    l2: float = 1e-4,
    tol: float = 1e-6,
    max_iter: int = 100_000,
) -> EnsembleModel:
    """Maximum-likelihood logistic regression by plain gradient descent.

    The L2 penalty applies to the weights only (not the intercept), so an
    uninformative feature matrix collapses to the intercept-only model whose
    probability is the class prevalence. Stops when the gradient infinity
    norm drops below ``tol`` or after ``max_iter`` steps.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"features {x.shape} vs labels {y.shape}")
    if len(np.unique(y)) < 2:
        raise SingleClass("labels are all one class")
    n, nfeat = x.shape
    order = tuple(feature_order) if feature_order is not None else tuple(f"f{i}" for i in range(nfeat))

    # Lipschitz constant of the penalized gradient -> guaranteed-stable step
    smax = float(np.linalg.norm(x, 2))
    lipschitz = 0.25 * (smax * smax) / n + 0.25 / 1.0 + l2
    step = 1.0 / lipschitz

    w = np.zeros(nfeat)
    b = 0.0
    for _ in range(max_iter):
        z = x @ w + b
        p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
        err = p - y
        gw = x.T @ err / n + l2 * w
        gb = float(err.mean())
        if max(float(np.abs(gw).max()), abs(gb)) < tol:
            break
        w -= step * gw
        b -= step * gb
    return EnsembleModel(weights=w, intercept=b, feature_order=order)


# ---------------------------------------------------------------------------
# full-case prediction
# ---------------------------------------------------------------------------

def prepare_classifier_input(
    vol: Volume3D,
    input_size: tuple[int, int, int],
    window: SliceWindow = DEFAULT_SLICE_WINDOW,
) -> np.ndarray:
    """Standardize one modality: z-score, slice window, resize -> (1,1,D,H,W)."""
    v = canonicalize(vol)
    params = compute_norm_params(v, NormVariant.ZSCORE)
    v = normalize(v, params)
    v = select_slice_window(v, window)
    arr = v.data.transpose(2, 1, 0)  # (D=z, H=y, W=x)
    arr = resize_array(np.ascontiguousarray(arr, dtype=np.float32), input_size, "trilinear")
    return arr[None, None, ...]


@dataclass(frozen=True)
class MethylationPrediction:
    probability: float
    status_bit: int  # 1 = methylated
    per_modality: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "probability": self.probability,
            "status_bit": self.status_bit,
            "per_modality": [
                {"modality": m, **info} for m, info in self.per_modality.items()
            ],
        }


def predict_methylation(
    case: Union[Mapping[str, Volume3D], object],
    models: Mapping[tuple[int, str], ResClassifier3D],
    ensemble: EnsembleModel,
    window: SliceWindow = DEFAULT_SLICE_WINDOW,
) -> MethylationPrediction:
    """Combine per-(fold, modality) model probabilities through the ensemble.

    ``case`` is a modality->Volume3D mapping (or anything with a ``volumes``
    attribute holding one). Absent modalities are imputed at 0.5.
    """
    volumes = case.volumes if hasattr(case, "volumes") else case
    present = [m for m in MODALITIES if m in volumes and volumes[m] is not None]
    if not present:
        raise NoModalities("case has no recognizable modality")

    prepared: dict[tuple[str, tuple[int, int, int]], np.ndarray] = {}
    features = np.full(len(ensemble.feature_order), 0.5, dtype=np.float64)
    by_modality: dict[str, list[float]] = {m: [] for m in MODALITIES}
    for i, name in enumerate(ensemble.feature_order):
        fold_tag, modality = name.split(":", 1)
        fold = int(fold_tag.removeprefix("fold"))
        if modality not in present or (fold, modality) not in models:
            continue
        model = models[(fold, modality)]
        key = (modality, tuple(model.config.input_size))
        if key not in prepared:
            prepared[key] = prepare_classifier_input(volumes[modality], model.config.input_size, window)
        prob = model.probability(prepared[key])
        features[i] = prob
        by_modality[modality].append(prob)

    probability = ensemble.predict_proba(features)
    per_modality = {}
    for m in MODALITIES:
        probs = by_modality[m]
        per_modality[m] = {
            "probability": float(np.mean(probs)) if probs else 0.5,
            "imputed": not probs,
        }
    return MethylationPrediction(
        probability=probability,
        status_bit=int(probability >= 0.5),
        per_modality=per_modality,
    )
