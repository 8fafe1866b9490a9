"""Explanation quality scores against a ground-truth pixel mask.

All scores read the absolute value of the map, so signed and unsigned maps
are treated alike, and all are invariant to positive rescaling of the map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .transport import MassDistribution, optimal_transport_cost


def _grid(m) -> np.ndarray:
    g = getattr(m, "grid", m)
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"importance map must be 2-D, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("importance map contains non-finite values")
    return g


def _mask(mask, shape) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} differs from map shape {shape}")
    if not mask.any():
        raise ValueError("ground-truth mask is empty")
    return mask


def max_pixel_distance(shape) -> float:
    """Euclidean distance between opposite corners of the grid."""
    h, w = shape
    return math.hypot(h - 1, w - 1)


def emd_score(importance, mask) -> float:
    """1 - OT(|s|, uniform mask mass) / corner-to-corner distance; 0 for an all-zero map."""
    g = _grid(importance)
    mask = _mask(mask, g.shape)
    if not np.abs(g).sum() > 0:
        return 0.0
    cost = optimal_transport_cost(MassDistribution.from_grid(g), MassDistribution.uniform(mask))
    return float(min(max(1.0 - cost / max_pixel_distance(g.shape), 0.0), 1.0))


def ima_score(importance, mask) -> float:
    """Share of the total |s| that falls on the mask; 0 for an all-zero map."""
    a = np.abs(_grid(importance))
    mask = _mask(mask, a.shape)
    total = a.sum()
    if not total > 0:
        return 0.0
    return float(min(a[mask].sum() / total, 1.0))


def precision_score(importance, mask) -> float:
    """Fraction of the k = |mask| largest |s| pixels that lie on the mask.

    Ties are broken towards the smaller row-major index.
    """
    g = _grid(importance)
    m = _mask(mask, g.shape).ravel()
    a = np.abs(g).ravel()
    k = int(m.sum())
    top = np.lexsort((np.arange(a.size), -a))[:k]
    return float(m[top].sum() / k)


@dataclass(frozen=True)
class MetricResult:
    emd: float
    ima: float
    precision: float
    sample_id: int | None = None
    method_id: str | None = None
    degenerate: bool = False
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("emd", "ima", "precision"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")


def score_map(importance, mask, sample_id=None, method_id=None) -> MetricResult:
    g = _grid(importance)
    degenerate = not np.abs(g).sum() > 0
    sample_id = getattr(importance, "sample_id", None) if sample_id is None else sample_id
    method_id = getattr(importance, "method", None) if method_id is None else method_id
    return MetricResult(emd_score(g, mask), ima_score(g, mask), precision_score(g, mask),
                        sample_id, method_id, degenerate,
                        dict(getattr(importance, "provenance", {}) or {}))


def score_all(maps, masks) -> list[MetricResult]:
    """Score each map against the mask at the same position."""
    maps, masks = list(maps), list(masks)
    if len(maps) != len(masks):
        raise ValueError(f"{len(maps)} maps but {len(masks)} masks")
    return [score_map(m, k) for m, k in zip(maps, masks)]
