import numpy as np
import pytest

from tetrobench.models import Network, build_architecture


class LinearLogits:
    """logit_c(x) = sum_i W[i, c] x_i + b_c on flattened images; a black-box test model."""

    def __init__(self, W, b=None):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.zeros(self.W.shape[1]) if b is None else np.asarray(b, dtype=np.float64)

    def logits(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x.reshape(len(x), -1) @ self.W + self.b


class FunctionLogits:
    """Both logits equal f(x) for an arbitrary vectorised f over (N, H, W) batches."""

    def __init__(self, f):
        self.f = f

    def logits(self, x):
        v = self.f(np.asarray(x, dtype=np.float64))
        return np.stack([v, v], axis=1)


def linear_network(W, b=None, side=8) -> Network:
    arch = build_architecture("LLR", side)
    W = np.asarray(W, dtype=np.float64)
    return Network(arch, [W, np.zeros(2) if b is None else np.asarray(b, dtype=np.float64)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
