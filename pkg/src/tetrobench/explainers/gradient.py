"""Gradient-based attributions of a target logit."""

from __future__ import annotations

import numpy as np

from .base import as_batch, method_stream


def _grad(model, x, targets, rule=None, chunk: int = 8192) -> np.ndarray:
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (len(x),))
    out = np.empty_like(x)
    for s in range(0, len(x), chunk):
        out[s:s + chunk] = model.input_gradient(x[s:s + chunk], targets[s:s + chunk], rule=rule)[0]
    return out


def saliency(model, x, targets) -> np.ndarray:
    """Signed gradient of the target logit with respect to the input."""
    xb, single = as_batch(x)
    g = _grad(model, xb, targets)
    return g[0] if single else g


def guided_backprop(model, x, targets) -> np.ndarray:
    xb, single = as_batch(x)
    g = _grad(model, xb, targets, rule="guided")
    return g[0] if single else g


def deconvolution(model, x, targets) -> np.ndarray:
    xb, single = as_batch(x)
    g = _grad(model, xb, targets, rule="deconv")
    return g[0] if single else g


def integrated_gradients(model, x, targets, steps: int = 64, baseline=None) -> np.ndarray:
    """(x - b) times the mean gradient at ``steps`` midpoints of the straight path from b."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    xb, single = as_batch(x)
    b = np.zeros_like(xb) if baseline is None else np.broadcast_to(baseline, xb.shape)
    n = len(xb)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (n,))
    alphas = (np.arange(steps) + 0.5) / steps
    out = np.empty_like(xb)
    per_chunk = max(1, 8192 // steps)
    for s in range(0, n, per_chunk):
        xs, bs = xb[s:s + per_chunk], b[s:s + per_chunk]
        path = bs[:, None] + alphas[None, :, None, None] * (xs - bs)[:, None]
        k = len(xs)
        g = _grad(model, path.reshape((k * steps,) + xs.shape[1:]),
                  np.repeat(targets[s:s + per_chunk], steps))
        out[s:s + per_chunk] = (xs - bs) * g.reshape((k, steps) + xs.shape[1:]).mean(axis=1)
    return out[0] if single else out


def gradient_shap(model, x, targets, samples: int = 32, noise: float = 0.1, baseline=None,
                  seed: int = 0, sample_ids=None) -> np.ndarray:
    """Mean of (x - b) * grad f(b + u (x - b) + noise), u ~ U[0, 1], noise ~ N(0, noise^2)."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    xb, single = as_batch(x)
    n = len(xb)
    b = np.zeros_like(xb) if baseline is None else np.broadcast_to(baseline, xb.shape)
    ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (n,))
    points = np.empty((n, samples) + xb.shape[1:])
    for i in range(n):
        rng = method_stream(seed, "gradient_shap", ids[i])
        u = rng.random(samples)
        eps = rng.standard_normal((samples,) + xb.shape[1:]) * noise
        points[i] = b[i] + u[:, None, None] * (xb[i] - b[i]) + eps
    g = _grad(model, points.reshape((n * samples,) + xb.shape[1:]), np.repeat(targets, samples))
    out = (xb - b) * g.reshape(points.shape).mean(axis=1)
    return out[0] if single else out
