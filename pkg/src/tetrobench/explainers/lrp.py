"""Epsilon-rule layer-wise relevance propagation."""

from __future__ import annotations

import numpy as np

from .. import engine as E
from ..models.network import Conv, Dense, Flatten, Pool, ReLU
from .base import as_batch


def _stabilise(z: np.ndarray, eps: float) -> np.ndarray:
    # epsilon scaled by the mean |z| of each sample's layer output
    axes = tuple(range(1, z.ndim))
    scale = np.abs(z).mean(axis=axes, keepdims=True)
    scale = np.where(scale > 0, scale, 1.0)
    return z + np.where(z >= 0, 1.0, -1.0) * eps * scale


def lrp_epsilon(model, x, targets, eps: float = 1e-6) -> np.ndarray:
    """Relevance of each pixel for the target logit.

    Relevance starts as the target logit and is redistributed layer by layer
    in proportion to each input's contribution a_i w_ij to the (stabilised)
    pre-activation. ReLUs pass relevance through; max pools route it to the
    winning input. Bias terms absorb their share, so conservation is exact
    only for bias-free networks.
    """
    xb, single = as_batch(x)
    n = len(xb)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (n,))
    tape = E.Tape()
    params = [tape.constant(p) for p in model.params]
    trace: list = []
    out = model.forward(tape, tape.constant(xb), params, trace=trace)
    R = np.zeros_like(out.data)
    R[np.arange(n), targets] = out.data[np.arange(n), targets]

    pi = len(params)
    for li in range(len(trace) - 1, -1, -1):
        layer, inp = trace[li]
        a = inp.data
        if isinstance(layer, Dense):
            pi -= 2
            W, b = params[pi].data, params[pi + 1].data
            z = a @ W + b
            s = R / _stabilise(z, eps)
            R = a * (s @ W.T)
        elif isinstance(layer, Conv):
            pi -= 2
            sub = E.Tape()
            conv = E.conv2d(sub.constant(a), sub.constant(params[pi].data),
                            stride=layer.stride, padding=layer.padding)
            z = conv.data + params[pi + 1].data.reshape(1, -1, 1, 1)
            s = R / _stabilise(z, eps)
            R = a * sub.nodes[conv.id].vjp(s, None)[0]
        elif isinstance(layer, Pool):
            sub = E.Tape()
            pooled = E.maxpool2d(sub.constant(a), layer.kernel, layer.stride)
            R = sub.nodes[pooled.id].vjp(R, None)[0]
        elif isinstance(layer, Flatten):
            R = R.reshape(a.shape)
        elif isinstance(layer, ReLU):
            pass
        else:
            raise ValueError(f"lrp_epsilon: unsupported layer {li} ({type(layer).__name__})")
    R = R.reshape(xb.shape)
    return R[0] if single else R
