"""Model architectures and the stacking ensemble."""
from .classifier import ResClassifier3D, ResClassifierConfig, ResidualBlock
from .ensemble import (
    EnsembleModel,
    MethylationPrediction,
    ensemble_feature_order,
    fit_logistic_ensemble,
    predict_methylation,
    prepare_classifier_input,
)
from .unet import UNet7, UNet7Config

__all__ = [
    "UNet7",
    "UNet7Config",
    "ResClassifier3D",
    "ResClassifierConfig",
    "ResidualBlock",
    "EnsembleModel",
    "MethylationPrediction",
    "ensemble_feature_order",
    "fit_logistic_ensemble",
    "predict_methylation",
    "prepare_classifier_input",
]
