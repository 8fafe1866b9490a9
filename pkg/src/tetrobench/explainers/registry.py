"""Method registry: one entry point for every explainer and baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import baselines, gradient, lrp, perturbation
from .base import AttributionRequest, ImportanceMap, default_patch, method_stream


@dataclass(frozen=True)
class MethodInfo:
    run: Callable  # (model, X, targets, sample_ids, seed, params, reference, baseline) -> (N, H, W)
    defaults: dict
    family: str  # gradient | propagation | perturbation | baseline
    patched: bool = False


def _gradient_method(fn, *names):
    def run(model, X, targets, sample_ids, seed, params, reference, baseline=None):
        kw = {k: params[k] for k in names}
        if "seed" in fn.__code__.co_varnames:
            kw.update(seed=seed, sample_ids=sample_ids)
        if "baseline" in fn.__code__.co_varnames:
            kw.update(baseline=baseline)
        return fn(model, X, targets, **kw)
    return run


def _patched(fn, *names):
    def run(model, X, targets, sample_ids, seed, params, reference, baseline=None):
        kw = {k: params[k] for k in names}
        return fn(model, X, targets, seed=seed, sample_ids=sample_ids, patch=params["patch"],
                  baseline=baseline, **kw)
    return run


def _pfi(model, X, targets, sample_ids, seed, params, reference, baseline=None):
    if reference is None:
        raise ValueError("pfi needs a reference batch (images, labels) to permute within")
    ref_x, ref_y = reference
    grid = perturbation.permutation_feature_importance(
        model, ref_x, ref_y, repeats=params["repeats"], seed=seed, patch=params["patch"])
    return np.broadcast_to(grid, X.shape).copy()


def _filter(fn):
    def run(model, X, targets, sample_ids, seed, params, reference, baseline=None):
        return np.stack([fn(x) for x in X])
    return run


def _random(model, X, targets, sample_ids, seed, params, reference, baseline=None):
    return np.stack([baselines.uniform_noise(x.shape, method_stream(seed, "random", i))
                     for x, i in zip(X, sample_ids)])


METHODS: dict[str, MethodInfo] = {
    "saliency": MethodInfo(_gradient_method(gradient.saliency), {}, "gradient"),
    "integrated_gradients": MethodInfo(_gradient_method(gradient.integrated_gradients, "steps"),
                                       {"steps": 64}, "gradient"),
    "gradient_shap": MethodInfo(_gradient_method(gradient.gradient_shap, "samples", "noise"),
                                {"samples": 32, "noise": 0.1}, "gradient"),
    "guided_backprop": MethodInfo(_gradient_method(gradient.guided_backprop), {}, "gradient"),
    "deconvolution": MethodInfo(_gradient_method(gradient.deconvolution), {}, "gradient"),
    "lrp_epsilon": MethodInfo(_gradient_method(lrp.lrp_epsilon, "eps"), {"eps": 1e-6}, "propagation"),
    "pfi": MethodInfo(_pfi, {"repeats": 5}, "perturbation", patched=True),
    "shapley_sampling": MethodInfo(_patched(perturbation.shapley_value_sampling, "permutations"),
                                   {"permutations": 25}, "perturbation", patched=True),
    "kernel_shap": MethodInfo(_patched(perturbation.kernel_shap, "coalitions"),
                              {"coalitions": None}, "perturbation", patched=True),
    "lime": MethodInfo(_patched(perturbation.lime, "perturbations", "ridge", "kernel_width"),
                       {"perturbations": 1000, "ridge": 1e-3, "kernel_width": None},
                       "perturbation", patched=True),
    "sobel": MethodInfo(_filter(baselines.sobel), {}, "baseline"),
    "laplace": MethodInfo(_filter(baselines.laplace), {}, "baseline"),
    "random": MethodInfo(_random, {}, "baseline"),
    "input": MethodInfo(_filter(baselines.rectified_input), {}, "baseline"),
}


def available_methods() -> list[str]:
    return sorted(METHODS)


def _lookup(method: str) -> MethodInfo:
    try:
        return METHODS[method]
    except KeyError:
        raise KeyError(f"unknown method {method!r}; registered methods: "
                       f"{', '.join(available_methods())}") from None


def resolve_params(method: str, params: dict | None, side: int) -> dict:
    """Defaults overlaid with ``params``; patch-based methods also get a patch size."""
    info = _lookup(method)
    merged = dict(info.defaults)
    if info.patched:
        merged["patch"] = default_patch(side)
    for k, v in (params or {}).items():
        if k not in merged:
            raise ValueError(f"{method}: unknown hyperparameter {k!r}; accepted: {sorted(merged)}")
        merged[k] = v
    if info.patched:
        n_patches = (-(-side // merged["patch"])) ** 2
    if method == "kernel_shap" and merged["coalitions"] is None:
        merged["coalitions"] = 2 * n_patches + 16
    if method == "lime" and merged["kernel_width"] is None:
        merged["kernel_width"] = 0.25 * float(np.sqrt(n_patches))
    return merged


def _network(model):
    return getattr(model, "network", model)


def explain_batch(method: str, model, X, targets, sample_ids=None, params: dict | None = None,
                  seed: int = 0, reference=None, baseline=None) -> list[ImportanceMap]:
    """One map per row of ``X``; equal to explaining each row alone up to BLAS rounding."""
    info = _lookup(method)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    n = len(X)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (n,))
    if np.any((targets != 0) & (targets != 1)):
        raise ValueError("targets must be 0 or 1")
    sample_ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids, dtype=np.int64)
    merged = resolve_params(method, params, X.shape[-1])
    if n == 0:
        return []
    grids = info.run(_network(model), X, targets, sample_ids, seed, merged, reference, baseline)
    prov = {"method": method, "family": info.family, "params": merged, "seed": int(seed)}
    return [ImportanceMap(g, method, int(i), signed=method not in ("sobel", "input"),
                          provenance=dict(prov)) for g, i in zip(grids, sample_ids)]


def explain(request: AttributionRequest) -> ImportanceMap:
    """Route one request to its method and stamp method, hyperparameters and seed."""
    return explain_batch(request.method, request.model, request.sample[None], [request.target],
                         [request.sample_id], request.params, request.seed, request.reference,
                         request.baseline[None])[0]
