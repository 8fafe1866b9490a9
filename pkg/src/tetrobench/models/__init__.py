"""Classifier architectures, training and model selection."""

from .network import (ARCHITECTURES, ArchitectureSpec, Network, build_architecture,
                      he_normal_params)
from .training import (TrainingConfig, TrainingReport, TrainedModel, TrainingError,
                       CalibrationResult, CalibrationError, train, evaluate_accuracy,
                       calibrate_snr, choose_alpha, correctly_predicted_intersection,
                       default_learning_rate)

__all__ = [
    "ARCHITECTURES", "ArchitectureSpec", "Network", "build_architecture", "he_normal_params",
    "TrainingConfig", "TrainingReport", "TrainedModel", "TrainingError", "CalibrationResult",
    "CalibrationError", "train", "evaluate_accuracy", "calibrate_snr", "choose_alpha",
    "correctly_predicted_intersection", "default_learning_rate",
]
