"""Layer stacks for the LLR, MLP and CNN classifiers."""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .. import engine as E

ARCHITECTURES = ("LLR", "MLP", "CNN")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Dense:
    n_in: int
    n_out: int
    kind: str = "dense"


@dataclass(frozen=True)
class Conv:
    c_in: int
    c_out: int
    kernel: int
    stride: int = 1
    padding: str = "same"
    kind: str = "conv"


@dataclass(frozen=True)
class Pool:
    kernel: int
    stride: int
    kind: str = "pool"


@dataclass(frozen=True)
class ReLU:
    kind: str = "relu"


@dataclass(frozen=True)
class Flatten:
    kind: str = "flatten"


_LAYER_TYPES = {"dense": Dense, "conv": Conv, "pool": Pool, "relu": ReLU, "flatten": Flatten}


@dataclass(frozen=True)
class ArchitectureSpec:
    kind: str
    side: int
    layers: tuple = field(default=(), compare=True)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "side": self.side,
                "layers": [asdict(layer) for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        layers = []
        for ld in d["layers"]:
            ld = dict(ld)
            layers.append(_LAYER_TYPES[ld.pop("kind")](**ld))
        return cls(d["kind"], int(d["side"]), tuple(layers))


MLP_WIDTHS = {8: (64, 32, 16, 8), 64: (1024, 256, 64, 16)}


def _conv_output(side: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-side // stride)
    return (side - kernel) // stride + 1


def build_architecture(kind: str, side: int, mlp_widths=None) -> ArchitectureSpec:
    """Layer plan for one of the three classifier kinds at a given image side."""
    kind = kind.upper()
    if kind not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {kind!r}; expected one of {ARCHITECTURES}")
    D = side * side
    if kind == "LLR":
        return ArchitectureSpec(kind, side, (Flatten(), Dense(D, 2)))
    if kind == "MLP":
        widths = tuple(mlp_widths) if mlp_widths else MLP_WIDTHS.get(side)
        if widths is None:
            # halve the width per layer, as at side 8
            widths = tuple(max(D >> i, 2) for i in range(4))
        layers: list = [Flatten()]
        n_in = D
        for w in widths:
            layers += [Dense(n_in, w), ReLU()]
            n_in = w
        layers.append(Dense(n_in, 2))
        return ArchitectureSpec(kind, side, tuple(layers))
    # CNN
    if side <= 8:
        filters, kernel, pool_k, pool_s = (4, 4, 4, 4), 2, 2, 2
    else:
        filters, kernel, pool_k, pool_s = (4, 8, 16, 32), 4, 2, 1
    layers = []
    c_in, s = 1, side
    for f in filters:
        s = _conv_output(s, kernel, 1, "same")
        # a map already smaller than the pool window passes through unchanged
        pool = Pool(pool_k, pool_s) if s >= pool_k else Pool(1, 1)
        layers += [Conv(c_in, f, kernel, 1, "same"), ReLU(), pool]
        s = (s - pool.kernel) // pool.stride + 1
        c_in = f
    layers += [Flatten(), Dense(c_in * s * s, 2)]
    return ArchitectureSpec(kind, side, tuple(layers))


def he_normal_params(arch: ArchitectureSpec, rng: np.random.Generator) -> list[np.ndarray]:
    params = []
    for layer in arch.layers:
        if isinstance(layer, Dense):
            std = np.sqrt(2.0 / layer.n_in)
            params.append(rng.normal(0.0, std, size=(layer.n_in, layer.n_out)))
            params.append(np.zeros(layer.n_out))
        elif isinstance(layer, Conv):
            fan_in = layer.c_in * layer.kernel ** 2
            std = np.sqrt(2.0 / fan_in)
            params.append(rng.normal(0.0, std, size=(layer.c_out, layer.c_in, layer.kernel, layer.kernel)))
            params.append(np.zeros(layer.c_out))
    return params


class Network:
    """A trained or freshly initialised classifier.

    ``params`` holds weight/bias arrays in layer order. Inputs are image
    batches of shape (N, side, side); outputs are (N, 2) pre-softmax logits.
    """

    def __init__(self, arch: ArchitectureSpec, params: list[np.ndarray]):
        self.arch = arch
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        expected = he_normal_params(arch, np.random.default_rng(0))
        if [p.shape for p in expected] != [p.shape for p in self.params]:
            raise E.ShapeError(
                f"parameter shapes {[p.shape for p in self.params]} do not fit {arch.kind} "
                f"plan {[p.shape for p in expected]}")

    @classmethod
    def init(cls, arch: ArchitectureSpec, seed: int) -> "Network":
        return cls(arch, he_normal_params(arch, np.random.default_rng(seed)))

    @property
    def side(self) -> int:
        return self.arch.side

    def forward(self, tape: E.Tape, x: E.Tensor, params: list[E.Tensor] | None = None,
                trace: list | None = None) -> E.Tensor:
        """Record the forward pass on ``tape``; optionally append (layer, input) pairs to ``trace``."""
        if params is None:
            params = [tape.constant(p) for p in self.params]
        h = x
        if x.data.ndim == 3 and isinstance(self.arch.layers[0], Conv):
            h = E.reshape(h, (x.shape[0], 1) + x.shape[1:])
        pi = 0
        for layer in self.arch.layers:
            if trace is not None:
                trace.append((layer, h))
            if isinstance(layer, Dense):
                h = E.add_bias(E.matmul(h, params[pi]), params[pi + 1])
                pi += 2
            elif isinstance(layer, Conv):
                h = E.conv2d(h, params[pi], stride=layer.stride, padding=layer.padding)
                h = E.add_bias(h, params[pi + 1])
                pi += 2
            elif isinstance(layer, ReLU):
                h = E.relu(h)
            elif isinstance(layer, Pool):
                h = E.maxpool2d(h, layer.kernel, layer.stride)
            elif isinstance(layer, Flatten):
                h = E.reshape(h, (h.shape[0], -1))
        return h

    def logits(self, x, batch_size: int = 4096) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        outs = []
        for start in range(0, len(x), batch_size):
            tape = E.Tape()
            outs.append(self.forward(tape, tape.constant(x[start:start + batch_size])).data)
        out = np.concatenate(outs) if outs else np.zeros((0, 2))
        return out[0] if single else out

    def predict(self, x) -> np.ndarray:
        return self.logits(x).argmax(axis=-1)

    def input_gradient(self, x, targets, rule=None) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of logit[n, targets[n]] with respect to each x[n]; also returns those logits."""
        x = np.asarray(x, dtype=np.float64)
        tape = E.Tape()
        xt = tape.leaf(x)
        out = self.forward(tape, xt)
        targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (len(x),))
        score = E.pick(out, targets)
        grads = E.backward(tape, score, rule=rule)
        return grads[xt.id], out.data[np.arange(len(x)), targets]

    # ------------------------------------------------------------ checkpoints

    def save(self, path, seed: int | None = None, report: dict | None = None) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        checksums = {}
        for i, p in enumerate(self.params):
            raw = np.ascontiguousarray(p, dtype="<f8").tobytes()
            (path / f"p{i}.f64").write_bytes(raw)
            checksums[f"p{i}.f64"] = hashlib.sha256(raw).hexdigest()
        manifest = {
            "format_version": CHECKPOINT_VERSION,
            "architecture": self.arch.to_dict(),
            "layer_shapes": [list(p.shape) for p in self.params],
            "seed": seed,
            "training_report": report,
            "checksums": checksums,
        }
        tmp = path / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=2))
        tmp.replace(path / "manifest.json")
        return path

    @classmethod
    def load(cls, path) -> "Network":
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text())
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {manifest.get('format_version')}")
        arch = ArchitectureSpec.from_dict(manifest["architecture"])
        params = []
        for i, shape in enumerate(manifest["layer_shapes"]):
            raw = (path / f"p{i}.f64").read_bytes()
            n = int(np.prod(shape))
            if len(raw) != 8 * n:
                raise ValueError(f"{path / f'p{i}.f64'}: expected {8 * n} bytes, found {len(raw)}")
            if hashlib.sha256(raw).hexdigest() != manifest["checksums"][f"p{i}.f64"]:
                raise ValueError(f"{path / f'p{i}.f64'}: checksum mismatch")
            params.append(np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
        return cls(arch, params)
