"""Gaussian smoothing, support thresholding and normalisation helpers."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

SUPPORT_FRACTION = 0.05


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


@lru_cache(maxsize=32)
def _smoothing_matrix(side: int, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    m = np.zeros((side, side))
    for i in range(side):
        for off in range(-r, r + 1):
            j = i + off
            if 0 <= j < side:
                m[i, j] = k[off + r]
    m.setflags(write=False)
    return m


def gaussian_smooth(grid, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with zero padding, radius ceil(3 sigma).

    Accepts one (H, W) grid or a stack (..., H, W). sigma == 0 returns a copy.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    grid = np.asarray(grid, dtype=np.float64)
    if sigma == 0:
        return grid.copy()
    h, w = grid.shape[-2:]
    mh = _smoothing_matrix(h, float(sigma))
    mw = _smoothing_matrix(w, float(sigma))
    return mh @ grid @ mw.T


def threshold_support(smoothed) -> np.ndarray:
    """Boolean mask where |value| reaches 5% of the grid's peak magnitude."""
    a = np.abs(np.asarray(smoothed, dtype=np.float64))
    peak = a.max() if a.size else 0.0
    if peak <= 0:
        raise ValueError("cannot threshold the support of an all-zero pattern")
    return a >= SUPPORT_FRACTION * peak


def frobenius_normalize(batch) -> np.ndarray:
    """Divide every grid by the Frobenius norm of the whole stacked batch."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.size == 0:
        raise ValueError("cannot normalise an empty batch")
    norm = math.sqrt(float(np.sum(batch * batch)))
    if norm == 0:
        raise ValueError("cannot normalise an all-zero batch")
    return batch / norm


def rescale_dataset(samples) -> np.ndarray:
    """Divide by the global maximum absolute value so that samples lie in [-1, 1]."""
    samples = np.asarray(samples, dtype=np.float64)
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    if peak == 0:
        raise ValueError("cannot rescale a degenerate all-zero dataset")
    return samples / peak
