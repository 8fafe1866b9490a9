"""Synthetic tetromino datasets with ground-truth masks."""

from .filters import (gaussian_smooth, threshold_support, frobenius_normalize,
                      rescale_dataset)
from .generate import (ScenarioSpec, Dataset, Split, LabeledSample, SCENARIOS, BACKGROUNDS,
                       XOR_CASES, build_dataset, build_ground_truth, generate_additive,
                       generate_multiplicative, sample_background, split_sizes)
from .io import save_dataset, load_dataset
from .patterns import (RigidTransform, TetrominoPattern, make_pattern, sample_rigid_transform,
                       valid_placements)

__all__ = [
    "gaussian_smooth", "threshold_support", "frobenius_normalize", "rescale_dataset",
    "ScenarioSpec", "Dataset", "Split", "LabeledSample", "SCENARIOS", "BACKGROUNDS", "XOR_CASES",
    "build_dataset", "build_ground_truth", "generate_additive", "generate_multiplicative",
    "sample_background", "split_sizes", "save_dataset", "load_dataset", "RigidTransform",
    "TetrominoPattern", "make_pattern", "sample_rigid_transform", "valid_placements",
]
