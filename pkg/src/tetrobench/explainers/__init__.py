"""Importance maps for trained classifiers and model-ignorant baselines."""

from .base import AttributionRequest, ImportanceMap, default_patch, method_stream, patch_ids
from .baselines import LAPLACE, SOBEL_X, SOBEL_Y, filter3x3, laplace, rectified_input, sobel, uniform_noise
from .gradient import deconvolution, gradient_shap, guided_backprop, integrated_gradients, saliency
from .lrp import lrp_epsilon
from .perturbation import (kernel_shap, lime, permutation_feature_importance,
                           shapley_kernel_weight, shapley_value_sampling)
from .registry import METHODS, MethodInfo, available_methods, explain, explain_batch, resolve_params

__all__ = [
    "AttributionRequest", "ImportanceMap", "default_patch", "method_stream", "patch_ids",
    "LAPLACE", "SOBEL_X", "SOBEL_Y", "filter3x3", "laplace", "rectified_input", "sobel",
    "uniform_noise", "deconvolution", "gradient_shap", "guided_backprop", "integrated_gradients",
    "saliency", "lrp_epsilon", "kernel_shap", "lime", "permutation_feature_importance",
    "shapley_kernel_weight", "shapley_value_sampling", "METHODS", "MethodInfo",
    "available_methods", "explain", "explain_batch", "resolve_params",
]
