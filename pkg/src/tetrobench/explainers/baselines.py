"""Model-ignorant reference maps: edge filters, uniform noise and the rectified input."""

from __future__ import annotations

import numpy as np

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
LAPLACE = np.array([[0.0, 1.0, 0.0],
                    [1.0, -4.0, 1.0],
                    [0.0, 1.0, 0.0]])


def _pairwise(terms):
    while len(terms) > 1:
        paired = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
        terms = paired + terms[len(paired) * 2:]
    return terms[0]


def filter3x3(image, kernel) -> np.ndarray:
    """Zero-padded 3x3 cross-correlation.

    Each output is (sum of positive-weight taps) - (sum of |negative-weight| taps).
    Each side is summed pairwise over its taps in row-major kernel order, so a
    zero-sum kernel gives exactly 0 on constant regions and the result is
    reproducible bit for bit by a per-pixel loop.
    """
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {image.shape}")
    h, w = image.shape
    padded = np.pad(image, 1)
    sides = []
    for sign in (1.0, -1.0):
        terms = [abs(kernel[di, dj]) * padded[di:di + h, dj:dj + w]
                 for di in range(3) for dj in range(3) if kernel[di, dj] * sign > 0]
        sides.append(_pairwise(terms) if terms else np.zeros_like(image))
    return sides[0] - sides[1]


def sobel(image) -> np.ndarray:
    gx = filter3x3(image, SOBEL_X)
    gy = filter3x3(image, SOBEL_Y)
    return np.sqrt(gx * gx + gy * gy)


def laplace(image) -> np.ndarray:
    return filter3x3(image, LAPLACE)


def uniform_noise(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=shape)


def rectified_input(image) -> np.ndarray:
    return np.abs(np.asarray(image, dtype=np.float64))
