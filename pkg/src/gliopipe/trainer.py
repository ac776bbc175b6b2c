"""Training orchestration: case-level folds, the segmentation and classifier
loops, and evaluation reports.

Split hygiene is enforced here, not merely documented: every loop asserts
that no case id crosses its train/validation boundary. Determinism contract:
per-epoch RNG streams are derived from (seed, epoch), never from a shared
mutable generator, so a resumed run replays exactly like a straight one.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .augment import AugmentPolicy, NEUTRAL_POLICY, apply as apply_augment
from .cases import CaseRecord
from .errors import DimMismatch, SingleClass, TooFewCases
from .lossmetric import (
    LabelScheme,
    LossConfig,
    accuracy,
    auroc,
    bce_loss,
    region_dice,
    soft_dice_loss,
    weighted_focal_loss,
)
from .models import (
    EnsembleModel,
    ResClassifier3D,
    ResClassifierConfig,
    UNet7,
    UNet7Config,
    ensemble_feature_order,
    fit_logistic_ensemble,
    prepare_classifier_input,
)
from .preproc import (
    CHANNELS_4,
    CropMode,
    CropSpec,
    NormVariant,
    SliceWindow,
    compute_norm_params,
    crop_at,
    mask_from_tensor,
    normalize,
    resolve_crop_origin,
    stack_modalities,
)
from .tensor import Adam, LrSchedule, lr_at, ops
from .tensor import checkpoint as ckpt
from .tensor.optim import CLASSIFIER_SCHEDULE, SEGMENTATION_SCHEDULE

CONFIG_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    task: str = "segmentation"  # "segmentation" | "classification"
    epochs: int = 50
    batch_size: int = 1
    seed: int = 0
    folds: int = 4
    split: tuple[float, float] = (0.8, 0.2)
    lr_schedule: LrSchedule = SEGMENTATION_SCHEDULE
    loss: LossConfig = LossConfig()
    augment: AugmentPolicy = NEUTRAL_POLICY
    crop: CropSpec = CropSpec(size=(128, 128, 128), mode=CropMode.FOREGROUND)
    channels: tuple[str, ...] = CHANNELS_4
    normalization: NormVariant = NormVariant.MINMAX_STANDARD
    region_source: str = "paper"
    base_filters: int = 16
    num_classes: int = 4
    blocks_per_stage: tuple[int, ...] = (1, 1, 1, 1)
    cls_input_size: tuple[int, int, int] = (64, 256, 256)
    slice_window: SliceWindow = SliceWindow(0.25, 0.75)
    eval_every: int = 1
    stop_train_dice: Optional[float] = None

    def __post_init__(self):
        if self.task not in ("segmentation", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("bad epochs/batch_size")


# ---------------------------------------------------------------------------
# config file round-trip (versioned JSON)
# ---------------------------------------------------------------------------

def config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "version": CONFIG_VERSION,
        "task": cfg.task,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "folds": cfg.folds,
        "split": list(cfg.split),
        "lr_schedule": [[e, lr] for e, lr in cfg.lr_schedule.milestones],
        "loss": {
            "dice_smooth": cfg.loss.dice_smooth,
            "focal_gamma": cfg.loss.focal_gamma,
            "class_weights": list(cfg.loss.class_weights),
            "combo_focal_weight": cfg.loss.combo_focal_weight,
        },
        "augment": {
            "flip_prob": list(cfg.augment.flip_prob),
            "rot90": [[list(axes), p] for axes, p in cfg.augment.rot90],
            "stretch_range": list(cfg.augment.stretch_range),
            "noise_sigma": cfg.augment.noise_sigma,
            "blur_sigma": cfg.augment.blur_sigma,
            "seed": cfg.augment.seed,
        },
        "crop": {
            "size": list(cfg.crop.size),
            "mode": cfg.crop.mode.value,
            "origin": list(cfg.crop.origin),
            "seed": cfg.crop.seed,
            "min_foreground_fraction": cfg.crop.min_foreground_fraction,
        },
        "channels": list(cfg.channels),
        "normalization": cfg.normalization.value,
        "region_source": cfg.region_source,
        "base_filters": cfg.base_filters,
        "num_classes": cfg.num_classes,
        "blocks_per_stage": list(cfg.blocks_per_stage),
        "cls_input_size": list(cfg.cls_input_size),
        "slice_window": [cfg.slice_window.lo, cfg.slice_window.hi],
        "eval_every": cfg.eval_every,
        "stop_train_dice": cfg.stop_train_dice,
    }


def config_from_dict(doc: dict) -> TrainConfig:
    if doc.get("version") != CONFIG_VERSION:
        raise ValueError(f"unsupported config version {doc.get('version')}")
    return TrainConfig(
        task=doc["task"],
        epochs=int(doc["epochs"]),
        batch_size=int(doc["batch_size"]),
        seed=int(doc["seed"]),
        folds=int(doc["folds"]),
        split=tuple(float(x) for x in doc["split"]),
        lr_schedule=LrSchedule(tuple((int(e), float(lr)) for e, lr in doc["lr_schedule"])),
        loss=LossConfig(
            dice_smooth=float(doc["loss"]["dice_smooth"]),
            focal_gamma=float(doc["loss"]["focal_gamma"]),
            class_weights=tuple(float(w) for w in doc["loss"]["class_weights"]),
            combo_focal_weight=float(doc["loss"]["combo_focal_weight"]),
        ),
        augment=AugmentPolicy(
            flip_prob=tuple(float(p) for p in doc["augment"]["flip_prob"]),
            rot90=tuple((tuple(int(a) for a in axes), float(p)) for axes, p in doc["augment"]["rot90"]),
            stretch_range=tuple(float(x) for x in doc["augment"]["stretch_range"]),
            noise_sigma=float(doc["augment"]["noise_sigma"]),
            blur_sigma=float(doc["augment"]["blur_sigma"]),
            seed=int(doc["augment"]["seed"]),
        ),
        crop=CropSpec(
            size=tuple(int(s) for s in doc["crop"]["size"]),
            mode=CropMode(doc["crop"]["mode"]),
            origin=tuple(int(o) for o in doc["crop"]["origin"]),
            seed=int(doc["crop"]["seed"]),
            min_foreground_fraction=float(doc["crop"]["min_foreground_fraction"]),
        ),
        channels=tuple(doc["channels"]),
        normalization=NormVariant(doc["normalization"]),
        region_source=doc["region_source"],
        base_filters=int(doc["base_filters"]),
        num_classes=int(doc["num_classes"]),
        blocks_per_stage=tuple(int(b) for b in doc["blocks_per_stage"]),
        cls_input_size=tuple(int(d) for d in doc["cls_input_size"]),
        slice_window=SliceWindow(*(float(x) for x in doc["slice_window"])),
        eval_every=int(doc["eval_every"]),
        stop_train_dice=None if doc.get("stop_train_dice") is None else float(doc["stop_train_dice"]),
    )


def save_config(path: Path, cfg: TrainConfig):
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def load_config(path: Path) -> TrainConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------

def make_folds(
    cases: Sequence[CaseRecord],
    k: int = 4,
    seed: int = 0,
    stratify: bool = False,
) -> dict[str, int]:
    """Case-level fold assignment: deterministic, balanced within one case.

    Fold sizes differ by at most one. With ``stratify`` the positive rate of
    each fold tracks the global rate (per-class counts per fold differ by at
    most one). Assignments are also written to each record's ``fold`` field.
    """
    n = len(cases)
    if n < k:
        raise TooFewCases(f"{n} cases for {k} folds")
    rng = np.random.Generator(np.random.PCG64([int(seed), 0xF01D]))
    assignment: dict[str, int] = {}
    if stratify:
        if any(c.mgmt is None for c in cases):
            raise ValueError("stratified folds need mgmt on every case")
        pos = [i for i, c in enumerate(cases) if c.mgmt == 1]
        neg = [i for i, c in enumerate(cases) if c.mgmt == 0]
        rng.shuffle(pos)
        rng.shuffle(neg)
        stream = pos + neg
        for j, idx in enumerate(stream):
            assignment[cases[idx].case_id] = j % k
    else:
        order = rng.permutation(n)
        at = 0
        for f in range(k):
            size = n // k + (1 if f < n % k else 0)
            for idx in order[at : at + size]:
                assignment[cases[int(idx)].case_id] = f
            at += size
    for c in cases:
        c.fold = assignment[c.case_id]
    return assignment


def assert_fold_hygiene(train_ids: Sequence[str], val_ids: Sequence[str]):
    """No case id may appear on both sides of a split."""
    overlap = set(train_ids) & set(val_ids)
    if overlap:
        raise AssertionError(f"fold leakage: {sorted(overlap)}")


# ---------------------------------------------------------------------------
# segmentation training
# ---------------------------------------------------------------------------

def _fit_to_shape(arr: np.ndarray, dims: tuple[int, int, int], leading: int = 0) -> np.ndarray:
    """Center-crop/zero-pad the last three axes to ``dims`` (post-augmentation)."""
    out = arr
    for ax in range(3):
        cur = out.shape[leading + ax]
        want = dims[ax]
        if cur > want:
            start = (cur - want) // 2
            sl = [slice(None)] * out.ndim
            sl[leading + ax] = slice(start, start + want)
            out = out[tuple(sl)]
        elif cur < want:
            pad = [(0, 0)] * out.ndim
            before = (want - cur) // 2
            pad[leading + ax] = (before, want - cur - before)
            out = np.pad(out, pad)
    return np.ascontiguousarray(out)


def _normalized_case(case: CaseRecord, channels: Sequence[str], variant: NormVariant) -> dict:
    vols = {}
    for m in channels:
        v = case.volumes[m]
        vols[m] = normalize(v, compute_norm_params(v, variant))
    return vols


def split_cases(
    cases: Sequence[CaseRecord], split: tuple[float, float], seed: int
) -> tuple[list[CaseRecord], list[CaseRecord]]:
    rng = np.random.Generator(np.random.PCG64([int(seed), 0x5B17]))
    order = rng.permutation(len(cases))
    n_val = int(round(split[1] * len(cases)))
    val_idx = set(int(i) for i in order[:n_val])
    train = [cases[i] for i in range(len(cases)) if i not in val_idx]
    val = [cases[i] for i in range(len(cases)) if i in val_idx]
    return train, val


@dataclass
class SegTrainResult:
    model: UNet7
    history: list[dict]
    train_ids: list[str]
    val_ids: list[str]
    best_checkpoint: bytes
    best_metric: float
    state: dict = field(repr=False, default_factory=dict)


def _multiple_of_8_crop(vol_dims: tuple[int, int, int]) -> Optional[tuple[tuple[int, int, int], tuple[int, int, int]]]:
    dims = tuple((d // 8) * 8 for d in vol_dims)
    if any(d == 0 for d in dims):
        return None
    origin = tuple((vd - d) // 2 for vd, d in zip(vol_dims, dims))
    return origin, dims


def _segmentation_sample(
    norm_vols: dict,
    case: CaseRecord,
    cfg: TrainConfig,
    aug_seed: Optional[int],
    random_origin_seed: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One (input tensor, one-hot target) training pair.

    ``random_origin_seed`` overrides the configured crop with a random-origin
    draw; the training loop alternates these in so the network also sees
    tumor-free context (pure tumor-centered crops make it hallucinate lesions
    in healthy windows at full-volume inference).
    """
    if random_origin_seed is not None:
        spec = CropSpec(size=cfg.crop.size, mode=CropMode.RANDOM, seed=random_origin_seed)
        origin = resolve_crop_origin(spec, case.dims)
    else:
        fg = case.labels.data != 0
        origin = resolve_crop_origin(
            cfg.crop, case.dims, fg if cfg.crop.mode == CropMode.FOREGROUND else None
        )
    cropped = {m: crop_at(norm_vols[m], origin, cfg.crop.size) for m in cfg.channels}
    lab = crop_at(case.labels, origin, cfg.crop.size)
    mcv = stack_modalities(cropped, cfg.channels)
    if aug_seed is not None:
        mcv, lab = apply_augment(cfg.augment, (mcv, lab), seed=aug_seed)
        img = _fit_to_shape(mcv.data, cfg.crop.size, leading=1)
        labd = _fit_to_shape(lab.data, cfg.crop.size, leading=0)
    else:
        img, labd = mcv.data, lab.data
    x = np.ascontiguousarray(img.transpose(0, 3, 2, 1))[None, ...]  # (1,C,D,H,W)
    dense = LabelScheme.to_dense(labd).transpose(2, 1, 0)
    target = LabelScheme.one_hot(dense, cfg.num_classes)
    return x, target


def evaluate_segmentation(
    model: UNet7,
    cases: Sequence[CaseRecord],
    cfg: TrainConfig,
    region_source: Optional[str] = None,
) -> dict:
    """Full-volume Dice per case and region (center-cropped to a ÷8 grid when needed)."""
    from .predict import tiled_dense_prediction

    source = region_source or cfg.region_source
    schemes = {"paper": LabelScheme("paper"), "standard": LabelScheme("standard")}
    wanted = ["paper", "standard"] if source == "both" else [source]
    tensor_window = tuple(reversed(cfg.crop.size))
    per_case = []
    for case in cases:
        vols = _normalized_case(case, cfg.channels, cfg.normalization)
        fit = _multiple_of_8_crop(case.dims)
        if fit is None:
            raise DimMismatch(f"{case.case_id}: dims {case.dims} too small for the network")
        origin, dims = fit
        cropped = {m: crop_at(vols[m], origin, dims) for m in cfg.channels}
        lab = crop_at(case.labels, origin, dims)
        mcv = stack_modalities(cropped, cfg.channels)
        dense = tiled_dense_prediction(model, mcv.to_tensor(), tensor_window)
        pred_raw = LabelScheme.to_raw(mask_from_tensor(dense))
        entry: dict = {"case_id": case.case_id, "dice": {}}
        for name in wanted:
            dice = region_dice(pred_raw, lab.data, schemes[name])
            if name == "standard" and source == "both":
                entry["dice"]["TC_standard"] = dice["TC"]
            else:
                entry["dice"].update(dice)
        per_case.append(entry)
    regions = sorted({k for e in per_case for k in e["dice"]})
    mean_dice = {r: float(np.mean([e["dice"][r] for e in per_case])) for r in regions}
    median_dice = {r: float(np.median([e["dice"][r] for e in per_case])) for r in regions}
    return {"per_case": per_case, "mean_dice": mean_dice, "median_dice": median_dice}


def train_segmentation(
    cases: Sequence[CaseRecord],
    cfg: TrainConfig,
    resume: Optional[dict] = None,
) -> SegTrainResult:
    """Foreground-crop, augment, combo loss, Adam; tracks the best-validation model."""
    if any(c.labels is None for c in cases):
        raise ValueError("segmentation training needs labels on every case")
    train_cases, val_cases = split_cases(cases, cfg.split, cfg.seed)
    train_ids = [c.case_id for c in train_cases]
    val_ids = [c.case_id for c in val_cases]
    assert_fold_hygiene(train_ids, val_ids)

    model = UNet7(UNet7Config(
        in_channels=len(cfg.channels),
        num_classes=cfg.num_classes,
        base_filters=cfg.base_filters,
        seed=cfg.seed,
    ))
    ckpt_extra = {
        "channels": list(cfg.channels),
        "normalization": cfg.normalization.value,
        "region_source": cfg.region_source,
        "crop_size": list(cfg.crop.size),
    }
    opt = Adam(model.params(), lr=lr_at(cfg.lr_schedule, 0))
    history: list[dict] = []
    best_metric = -1.0
    best_checkpoint = model.to_bytes(extra=ckpt_extra)
    start_epoch = 0
    if resume:
        model.load_arrays([(f"p{i}", a) for i, a in enumerate(resume["params"])])
        opt.load_state_dict(resume["adam"])
        history = list(resume["history"])
        best_metric = resume["best_metric"]
        best_checkpoint = resume["best_checkpoint"]
        start_epoch = resume["epoch"]

    norm_cache = {c.case_id: _normalized_case(c, cfg.channels, cfg.normalization) for c in cases}
    use_augment = cfg.augment != NEUTRAL_POLICY
    # when crops are smaller than the volumes, half the draws use random
    # origins so tumor-free context reaches the network
    mix_random = cfg.crop.mode == CropMode.FOREGROUND and any(
        s < d for s, d in zip(cfg.crop.size, cases[0].dims)
    )

    for epoch in range(start_epoch, cfg.epochs):
        opt.lr = lr_at(cfg.lr_schedule, epoch)
        rng = np.random.Generator(np.random.PCG64([cfg.seed, 0xE70C, epoch]))
        order = rng.permutation(len(train_cases))
        losses, dices = [], []
        pending = 0
        for j, idx in enumerate(order):
            case = train_cases[int(idx)]
            aug_seed = int(rng.integers(0, 2**62)) if use_augment else None
            random_seed = None
            if mix_random and j % 2 == 1:
                random_seed = int(rng.integers(0, 2**62))
            x, target = _segmentation_sample(norm_cache[case.case_id], case, cfg, aug_seed,
                                             random_origin_seed=random_seed)
            logits = model.forward(x)
            probs, sm_cache = ops.softmax_forward(logits, axis=1)
            dice, gdice = soft_dice_loss(probs, target, cfg.loss)
            focal, gfocal = weighted_focal_loss(probs, target, cfg.loss)
            loss = dice + cfg.loss.combo_focal_weight * focal
            gprobs = gdice + cfg.loss.combo_focal_weight * gfocal
            glogits = ops.softmax_backward(gprobs, sm_cache)
            model.backward(glogits.astype(np.float32))
            pending += 1
            if pending == cfg.batch_size or j == len(order) - 1:
                opt.step()
                opt.zero_grad()
                pending = 0
            losses.append(float(loss))
            dices.append(1.0 - float(dice))
        entry = {
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": float(np.mean(losses)) if losses else None,
            "train_dice": float(np.mean(dices)) if dices else None,
            "val_dice": None,
        }
        is_last = epoch == cfg.epochs - 1
        stop_now = cfg.stop_train_dice is not None and entry["train_dice"] is not None \
            and entry["train_dice"] >= cfg.stop_train_dice
        # best-checkpoint selection compares one metric kind only: validation
        # mean dice when a validation split exists, train dice otherwise
        metric = None
        if val_cases:
            if epoch % cfg.eval_every == 0 or is_last or stop_now:
                report = evaluate_segmentation(model, val_cases, cfg)
                entry["val_dice"] = report["mean_dice"]
                metric = float(np.mean(list(report["mean_dice"].values())))
        else:
            metric = entry["train_dice"]
        if metric is not None and metric > best_metric:
            best_metric = metric
            best_checkpoint = model.to_bytes(extra={**ckpt_extra, "epoch": epoch})
        history.append(entry)
        if stop_now:
            break

    state = {
        "params": [p.value.copy() for p in model.params()],
        "adam": opt.state_dict(),
        "history": list(history),
        "best_metric": best_metric,
        "best_checkpoint": best_checkpoint,
        "epoch": history[-1]["epoch"] + 1 if history else start_epoch,
    }
    return SegTrainResult(
        model=model,
        history=history,
        train_ids=train_ids,
        val_ids=val_ids,
        best_checkpoint=best_checkpoint,
        best_metric=best_metric,
        state=state,
    )


def save_train_state(path: Path, state: dict, cfg: TrainConfig):
    arrays = [(f"param{i}", a) for i, a in enumerate(state["params"])]
    arrays += [(f"adam_m{i}", a) for i, a in enumerate(state["adam"]["m"])]
    arrays += [(f"adam_v{i}", a) for i, a in enumerate(state["adam"]["v"])]
    desc = {
        "kind": "train_state",
        "task": cfg.task,
        "epoch": state["epoch"],
        "step_count": state["adam"]["step_count"],
        "best_metric": state["best_metric"],
        "history": state["history"],
        "n_params": len(state["params"]),
        "best_checkpoint_hex": state["best_checkpoint"].hex(),
    }
    ckpt.save_checkpoint(path, desc, arrays)


def load_train_state(path: Path) -> dict:
    desc, arrays = ckpt.load_checkpoint(path)
    if desc.get("kind") != "train_state":
        raise ValueError("not a training-state checkpoint")
    n = int(desc["n_params"])
    values = [a for _, a in arrays]
    return {
        "params": values[:n],
        "adam": {"step_count": int(desc["step_count"]), "m": values[n : 2 * n], "v": values[2 * n : 3 * n]},
        "history": desc["history"],
        "best_metric": float(desc["best_metric"]),
        "best_checkpoint": bytes.fromhex(desc["best_checkpoint_hex"]),
        "epoch": int(desc["epoch"]),
    }


# ---------------------------------------------------------------------------
# classifier training
# ---------------------------------------------------------------------------

@dataclass
class ClassifierTrainResult:
    models: dict[tuple[int, str], ResClassifier3D]
    ensemble: EnsembleModel
    oof_auroc: dict[tuple[int, str], float]
    per_modality_auroc: dict[str, float]
    features: np.ndarray
    labels: np.ndarray
    case_ids: list[str]
    folds: dict[str, int]
    history: dict[tuple[int, str], list[float]]


def train_classifier(
    cases: Sequence[CaseRecord],
    cfg: TrainConfig,
    folds: Optional[dict[str, int]] = None,
) -> ClassifierTrainResult:
    """One residual classifier per (fold, modality), stacked by logistic regression.

    Out-of-fold probabilities feed the per-(fold, modality) AUROC table; the
    ensemble is fit on the assembled per-case feature vectors. Classifier
    training applies no augmentation. ``folds`` overrides the default
    stratified assignment (case_id -> fold index).
    """
    if any(c.mgmt is None for c in cases):
        raise ValueError("classifier training needs mgmt on every case")
    labels_all = np.array([c.mgmt for c in cases])
    if len(np.unique(labels_all)) < 2:
        raise SingleClass("all cases share one mgmt value")
    if folds is None:
        folds = make_folds(cases, cfg.folds, cfg.seed, stratify=True)
    else:
        ids = {c.case_id for c in cases}
        if set(folds) != ids or not all(0 <= f < cfg.folds for f in folds.values()):
            raise ValueError("fold override must map every case_id to 0..folds-1")
        for c in cases:
            c.fold = folds[c.case_id]
    modalities = list(cfg.channels)
    order = ensemble_feature_order(cfg.folds, modalities)
    schedule = cfg.lr_schedule if cfg.task == "classification" else CLASSIFIER_SCHEDULE

    # classifier inputs are deterministic per case/modality; prepare once
    inputs: dict[tuple[str, str], np.ndarray] = {}
    for c in cases:
        for m in modalities:
            inputs[(c.case_id, m)] = prepare_classifier_input(
                c.volumes[m], cfg.cls_input_size, cfg.slice_window
            )

    models: dict[tuple[int, str], ResClassifier3D] = {}
    history: dict[tuple[int, str], list[float]] = {}
    oof_auroc: dict[tuple[int, str], float] = {}
    for f in range(cfg.folds):
        val_cases = [c for c in cases if folds[c.case_id] == f]
        train_cases = [c for c in cases if folds[c.case_id] != f]
        assert_fold_hygiene([c.case_id for c in train_cases], [c.case_id for c in val_cases])
        if len(np.unique([c.mgmt for c in train_cases])) < 2:
            raise SingleClass(f"fold {f} training split has one class")
        for mi, m in enumerate(modalities):
            model = ResClassifier3D(ResClassifierConfig(
                base_filters=cfg.base_filters,
                blocks_per_stage=cfg.blocks_per_stage,
                input_size=cfg.cls_input_size,
                seed=int(np.random.default_rng([cfg.seed, f, mi]).integers(0, 2**31)),
            ))
            opt = Adam(model.params(), lr=lr_at(schedule, 0))
            losses_per_epoch: list[float] = []
            for epoch in range(cfg.epochs):
                opt.lr = lr_at(schedule, epoch)
                rng = np.random.Generator(np.random.PCG64([cfg.seed, f, mi, epoch]))
                perm = rng.permutation(len(train_cases))
                losses = []
                pending = 0
                for j, idx in enumerate(perm):
                    case = train_cases[int(idx)]
                    x = inputs[(case.case_id, m)]
                    logit = model.forward(x)
                    loss, glogit = bce_loss(float(logit[0, 0]), case.mgmt)
                    model.backward(np.array([[glogit]], dtype=np.float32))
                    pending += 1
                    if pending == cfg.batch_size or j == len(perm) - 1:
                        opt.step()
                        opt.zero_grad()
                        pending = 0
                    losses.append(loss)
                losses_per_epoch.append(float(np.mean(losses)))
            models[(f, m)] = model
            history[(f, m)] = losses_per_epoch
            val_probs = [model.probability(inputs[(c.case_id, m)]) for c in val_cases]
            val_labels = [c.mgmt for c in val_cases]
            oof_auroc[(f, m)] = auroc(val_probs, val_labels) if len(set(val_labels)) == 2 else float("nan")

    # assemble per-case features from all fold-modality models
    features = np.zeros((len(cases), len(order)))
    for ci, c in enumerate(cases):
        for i, name in enumerate(order):
            ftag, m = name.split(":", 1)
            features[ci, i] = models[(int(ftag.removeprefix("fold")), m)].probability(inputs[(c.case_id, m)])

    ensemble = fit_logistic_ensemble(features, labels_all, feature_order=order)

    per_modality_auroc = {}
    for m in modalities:
        # honest per-modality score: each case scored by its own fold's model
        probs = [models[(folds[c.case_id], m)].probability(inputs[(c.case_id, m)]) for c in cases]
        per_modality_auroc[m] = auroc(probs, labels_all)

    return ClassifierTrainResult(
        models=models,
        ensemble=ensemble,
        oof_auroc=oof_auroc,
        per_modality_auroc=per_modality_auroc,
        features=features,
        labels=labels_all,
        case_ids=[c.case_id for c in cases],
        folds=folds,
        history=history,
    )


def evaluate_classifier(
    models: dict[tuple[int, str], ResClassifier3D],
    ensemble: EnsembleModel,
    cases: Sequence[CaseRecord],
    window: SliceWindow = SliceWindow(0.25, 0.75),
) -> dict:
    """Held-out evaluation through the full prediction path."""
    from .models import predict_methylation

    per_case = []
    probs, labels = [], []
    per_modality_probs: dict[str, list[float]] = {}
    for c in cases:
        pred = predict_methylation(c, models, ensemble, window)
        per_case.append({
            "case_id": c.case_id,
            "probability": pred.probability,
            "status_bit": pred.status_bit,
            "mgmt": c.mgmt,
            "per_modality": pred.per_modality,
        })
        if c.mgmt is not None:
            probs.append(pred.probability)
            labels.append(c.mgmt)
            for m, info in pred.per_modality.items():
                if not info["imputed"]:
                    per_modality_probs.setdefault(m, []).append(info["probability"])
    report: dict = {"per_case": per_case}
    if labels and len(set(labels)) == 2:
        report["auroc"] = auroc(probs, labels)
        report["accuracy"] = accuracy(np.array(probs) >= 0.5, np.array(labels).astype(bool))
        report["per_modality_auroc"] = {
            m: auroc(v, labels) for m, v in per_modality_probs.items() if len(v) == len(labels)
        }
    return report
