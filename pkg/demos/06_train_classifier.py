"""Radiogenomic pipeline on phantoms: per-modality fold models, the stacked
logistic ensemble, and held-out evaluation through the full prediction path.

Run: python demos/06_train_classifier.py
"""
from gliopipe.phantom import generate_phantom_dataset
from gliopipe.tensor import LrSchedule
from gliopipe.trainer import TrainConfig, evaluate_classifier, train_classifier

train_cases = generate_phantom_dataset(16, dims=(32, 32, 32), seed=500)
test_cases = generate_phantom_dataset(8, dims=(32, 32, 32), seed=501)

cfg = TrainConfig(
    task="classification",
    epochs=6,
    seed=2,
    folds=2,
    lr_schedule=LrSchedule(((0, 1e-3),)),
    base_filters=4,
    blocks_per_stage=(1, 1),
    cls_input_size=(16, 32, 32),  # 25-75% window of 32 slices, no resampling
)

result = train_classifier(train_cases, cfg)
print("out-of-fold AUROC per (fold, modality):")
for (fold, modality), value in sorted(result.oof_auroc.items()):
    print(f"  fold {fold}  {modality:<5} {value:.3f}")
print(f"ensemble: {len(result.ensemble.weights)} weights + intercept")

report = evaluate_classifier(result.models, result.ensemble, test_cases)
print(f"\nheld-out AUROC {report['auroc']:.3f}  accuracy@0.5 {report['accuracy']:.3f}")
for case in report["per_case"][:4]:
    print(f"  {case['case_id']}: p={case['probability']:.3f} (true {case['mgmt']})")
