from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ImportanceMap:
    grid: np.ndarray
    method: str
    sample_id: int | None = None
    signed: bool = True
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if not np.all(np.isfinite(self.grid)):
            raise ValueError(f"{self.method}: importance map contains non-finite values")


@dataclass
class AttributionRequest:
    """One sample to explain.

    ``target`` is the class whose pre-softmax logit is attributed. ``reference``
    is the batch PFI permutes within; ``params`` are method hyperparameters.
    """

    method: str
    model: object
    sample: np.ndarray
    target: int
    baseline: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    sample_id: int = 0
    reference: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        self.sample = np.asarray(self.sample, dtype=np.float64)
        if self.baseline is None:
            self.baseline = np.zeros_like(self.sample)
        self.baseline = np.asarray(self.baseline, dtype=np.float64)
        if self.baseline.shape != self.sample.shape:
            raise ValueError(f"baseline shape {self.baseline.shape} differs from sample {self.sample.shape}")
        if self.target not in (0, 1):
            raise ValueError(f"target must be 0 or 1, got {self.target}")


def method_stream(seed: int, method: str, sample_id: int) -> np.random.Generator:
    """Independent rng per (global seed, method, sample)."""
    return np.random.default_rng([seed, zlib.crc32(method.encode()), int(sample_id)])


def as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ValueError(f"expected an (H, W) image or (N, H, W) batch, got shape {x.shape}")
    return x, False


def target_logits(model, x: np.ndarray, targets) -> np.ndarray:
    """logit[n, targets[n]] for a batch; ``targets`` may be a scalar."""
    out = np.asarray(model.logits(x))
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (len(x),))
    return out[np.arange(len(x)), targets]


def default_patch(side: int) -> int:
    return 1 if side <= 8 else 4


def patch_ids(shape: tuple[int, int], patch: int) -> np.ndarray:
    """Row-major patch index per pixel for square ``patch`` x ``patch`` tiles."""
    h, w = shape
    if patch < 1:
        raise ValueError("patch size must be positive")
    rows = np.arange(h) // patch
    cols = np.arange(w) // patch
    n_cols = -(-w // patch)
    return rows[:, None] * n_cols + cols[None, :]
