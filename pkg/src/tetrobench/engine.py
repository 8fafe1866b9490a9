"""Dense tensors with tape-based reverse-mode differentiation.

Every operation appends a node to the :class:`Tape` that owns its inputs.
:func:`backward` walks that tape in reverse; :func:`modified_backprop` does
the same but swaps the ReLU backward step for the guided or deconvolution
rule. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

RULES = (None, "guided", "deconv")


class ShapeError(ValueError):
    """Raised when an operation receives incompatible operand shapes."""


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    saved: dict
    vjp: Callable | None  # (grad_out, rule) -> tuple of input grads


class Tensor:
    """An array bound to a tape position."""

    __slots__ = ("data", "tape", "id", "requires_grad")

    def __init__(self, data: np.ndarray, tape: "Tape", id: int, requires_grad: bool):
        self.data = data
        self.tape = tape
        self.id = id
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, id={self.id})"


class Tape:
    """Ordered record of a forward pass.

    Nodes are appended in execution order, so inputs always precede the
    nodes that consume them.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.values: list[np.ndarray] = []
        self.leaves: list[int] = []

    def leaf(self, array, requires_grad: bool = True) -> Tensor:
        data = np.asarray(array, dtype=np.float64)
        node_id = len(self.nodes)
        self.nodes.append(Node("leaf", (), {}, None))
        self.values.append(data)
        if requires_grad:
            self.leaves.append(node_id)
        return Tensor(data, self, node_id, requires_grad)

    def constant(self, array) -> Tensor:
        return self.leaf(array, requires_grad=False)

    def record(self, op: str, inputs: Sequence[Tensor], out: np.ndarray,
               vjp: Callable, **saved) -> Tensor:
        for t in inputs:
            if t.tape is not self:
                raise ValueError(f"{op}: operand belongs to a different tape")
        node_id = len(self.nodes)
        self.nodes.append(Node(op, tuple(t.id for t in inputs), saved, vjp))
        self.values.append(out)
        requires = any(t.requires_grad for t in inputs)
        return Tensor(out, self, node_id, requires)


def _check(cond: bool, op: str, *shapes) -> None:
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}")


# ---------------------------------------------------------------- primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0],
           "matmul", a.shape, b.shape)
    A, B = a.data, b.data

    def vjp(g, rule):
        return g @ B.T, A.T @ g

    return a.tape.record("matmul", (a, b), A @ B, vjp)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-feature bias along axis 1 (dense rows or conv channels)."""
    _check(b.data.ndim == 1 and x.data.ndim >= 2 and x.shape[1] == b.shape[0],
           "add_bias", x.shape, b.shape)
    extra = x.data.ndim - 2
    bb = b.data.reshape((1, -1) + (1,) * extra)
    reduce_axes = (0,) + tuple(range(2, x.data.ndim))

    def vjp(g, rule):
        return g, g.sum(axis=reduce_axes)

    return x.tape.record("add_bias", (x, b), x.data + bb, vjp)


def relu(x: Tensor) -> Tensor:
    X = x.data

    def vjp(g, rule):
        if rule is None:
            return (g * (X > 0),)
        if rule == "guided":
            return (g * ((X > 0) & (g > 0)),)
        return (g * (g > 0),)

    return x.tape.record("relu", (x,), np.maximum(X, 0.0), vjp)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    in_shape = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {in_shape} as {shape}") from None

    def vjp(g, rule):
        return (g.reshape(in_shape),)

    return x.tape.record("reshape", (x,), out, vjp)


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) zero padding giving ceil(size / stride) outputs.

    Odd totals put the extra pixel after, as Keras and PyTorch do.
    """
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def _resolve_padding(padding, size: int, kernel: int, stride: int) -> tuple[int, int]:
    if padding == "same":
        return same_padding(size, kernel, stride)
    if padding in ("none", "valid", 0, None):
        return 0, 0
    if isinstance(padding, int) and padding > 0:
        return padding, padding
    raise ValueError(f"unsupported padding {padding!r}")


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding="none") -> Tensor:
    """2-D cross-correlation, x: (N, C, H, W), w: (F, C, k, k)."""
    _check(x.data.ndim == 4 and w.data.ndim == 4 and x.shape[1] == w.shape[1]
           and w.shape[2] == w.shape[3], "conv2d", x.shape, w.shape)
    if stride < 1:
        raise ValueError("conv2d: stride must be positive")
    N, C, H, W = x.shape
    F, _, k, _ = w.shape
    ph = _resolve_padding(padding, H, k, stride)
    pw = _resolve_padding(padding, W, k, stride)
    Hp, Wp = H + sum(ph), W + sum(pw)
    _check(Hp >= k and Wp >= k, "conv2d", x.shape, w.shape)
    xp = np.pad(x.data, ((0, 0), (0, 0), ph, pw)) if (sum(ph) + sum(pw)) else x.data
    Ho = (Hp - k) // stride + 1
    Wo = (Wp - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, Ho, Wo, C, k, k) -> rows of patches
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, C * k * k)
    wmat = w.data.reshape(F, C * k * k)
    out = (cols @ wmat.T).reshape(N, Ho, Wo, F).transpose(0, 3, 1, 2)
    Wd = w.data

    def vjp(g, rule):
        gmat = g.transpose(0, 2, 3, 1).reshape(N * Ho * Wo, F)
        gw = (gmat.T @ cols).reshape(Wd.shape)
        gcols = (gmat @ wmat).reshape(N, Ho, Wo, C, k, k)
        gxp = np.zeros((N, C, Hp, Wp))
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += (
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2))
        gx = gxp[:, :, ph[0]:ph[0] + H, pw[0]:pw[0] + W]
        return gx, gw

    return x.tape.record("conv2d", (x, w), np.ascontiguousarray(out), vjp,
                         stride=stride, padding=(ph, pw))


def maxpool2d(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    """Max pooling without padding; ties go to the first element in row-major order."""
    _check(x.data.ndim == 4 and x.shape[2] >= kernel and x.shape[3] >= kernel,
           "maxpool2d", x.shape, (kernel, kernel))
    if kernel < 1 or stride < 1:
        raise ValueError("maxpool2d: kernel and stride must be positive")
    N, C, H, W = x.shape
    Ho = (H - kernel) // stride + 1
    Wo = (W - kernel) // stride + 1
    win = sliding_window_view(x.data, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(N, C, Ho, Wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def vjp(g, rule):
        gx = np.zeros((N, C, H, W))
        for idx in range(kernel * kernel):
            i, j = divmod(idx, kernel)
            gx[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += g * (arg == idx)
        return (gx,)

    return x.tape.record("maxpool2d", (x,), out, vjp, argmax=arg, kernel=kernel, stride=stride)


def softmax(x: Tensor) -> Tensor:
    _check(x.data.ndim == 2, "softmax", x.shape)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def vjp(g, rule):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return x.tape.record("softmax", (x,), p, vjp)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of integer labels; returns a scalar."""
    labels = np.asarray(labels, dtype=np.int64)
    _check(logits.data.ndim == 2 and labels.shape == (logits.shape[0],),
           "cross_entropy", logits.shape, labels.shape)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(labels))
    nll = logsum - z[rows, labels]
    n = len(labels)

    def vjp(g, rule):
        p = np.exp(z - logsum[:, None])
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return logits.tape.record("cross_entropy", (logits,), np.array(nll.mean()), vjp)


def pick(x: Tensor, columns) -> Tensor:
    """Sum over rows of x[n, columns[n]]; a scalar handle for per-sample targets."""
    columns = np.asarray(columns, dtype=np.int64)
    _check(x.data.ndim == 2 and columns.shape == (x.shape[0],), "pick", x.shape, columns.shape)
    rows = np.arange(x.shape[0])
    shape = x.shape

    def vjp(g, rule):
        out = np.zeros(shape)
        out[rows, columns] = g
        return (out,)

    return x.tape.record("pick", (x,), np.array(x.data[rows, columns].sum()), vjp)


def total(x: Tensor) -> Tensor:
    shape = x.shape

    def vjp(g, rule):
        return (np.full(shape, float(g)),)

    return x.tape.record("sum", (x,), np.array(x.data.sum()), vjp)


_FORWARD = {
    "matmul": lambda ins, attrs: matmul(*ins),
    "add-bias": lambda ins, attrs: add_bias(*ins),
    "relu": lambda ins, attrs: relu(*ins),
    "conv2d": lambda ins, attrs: conv2d(*ins, stride=attrs.get("stride", 1),
                                        padding=attrs.get("padding", "none")),
    "maxpool2d": lambda ins, attrs: maxpool2d(*ins, kernel=attrs.get("kernel", 2),
                                              stride=attrs.get("stride", 2)),
    "softmax": lambda ins, attrs: softmax(*ins),
    "cross-entropy-loss": lambda ins, attrs: cross_entropy(ins[0], attrs["labels"]),
}


def forward_primitive(kind: str, inputs: Sequence[Tensor], attrs: dict | None = None) -> Tensor:
    """Dispatch a primitive by name."""
    if kind not in _FORWARD:
        raise ValueError(f"unknown primitive {kind!r}; expected one of {sorted(_FORWARD)}")
    return _FORWARD[kind](list(inputs), attrs or {})


# ------------------------------------------------------------------ backward

def _propagate(tape: Tape, output: Tensor, rule) -> list:
    if rule not in RULES:
        raise ValueError(f"unknown backprop rule {rule!r}")
    if output.tape is not tape:
        raise ValueError("output tensor was not recorded on this tape")
    if output.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    grads: list = [None] * (output.id + 1)
    grads[output.id] = np.ones_like(output.data)
    for nid in range(output.id, -1, -1):
        g = grads[nid]
        node = tape.nodes[nid]
        if g is None or node.vjp is None:
            continue
        in_grads = node.vjp(g, rule)
        for src, gi in zip(node.inputs, in_grads):
            if grads[src] is None:
                grads[src] = gi
            else:
                grads[src] = grads[src] + gi
    return grads


def backward(tape: Tape, output: Tensor, rule=None) -> dict[int, np.ndarray]:
    """Gradient of a scalar output with respect to every differentiable leaf.

    Returns ``{leaf id: gradient}``; leaves off every path to ``output`` get zeros.
    """
    grads = _propagate(tape, output, rule)
    result = {}
    for lid in tape.leaves:
        g = grads[lid] if lid < len(grads) else None
        result[lid] = np.zeros_like(tape.values[lid]) if g is None else g
    return result


def modified_backprop(tape: Tape, output: Tensor, wrt: Tensor, rule: str) -> np.ndarray:
    """Input-shaped gradient with the ReLU backward step replaced by ``rule``."""
    if rule not in ("guided", "deconv"):
        raise ValueError(f"rule must be 'guided' or 'deconv', got {rule!r}")
    return backward(tape, output, rule=rule)[wrt.id]


def grad_of(tape: Tape, output: Tensor, wrt: Tensor, rule=None) -> np.ndarray:
    return backward(tape, output, rule=rule)[wrt.id]


# --------------------------------------------------------------------- adam

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: Sequence[np.ndarray], lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **kw)


def adam_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
                state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam step, no weight decay. Inputs are not modified."""
    if not (len(params) == len(grads) == len(state.m)):
        raise ShapeError("adam_update: parameter, gradient and moment counts differ")
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam_update: shapes {p.shape}, {g.shape}, {m.shape} differ")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(state.lr, b1, b2, state.eps, step, new_m, new_v)
