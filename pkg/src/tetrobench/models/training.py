"""Training with Adam and best-validation-loss checkpointing."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import engine as E
from ..datagen import Dataset, ScenarioSpec, Split, build_dataset
from .network import ArchitectureSpec, Network, build_architecture

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = 500
DEFAULT_BATCH = 64
ACCURACY_THRESHOLD = 0.8


def default_learning_rate(scenario: str, side: int) -> float:
    if side <= 8:
        return 0.0004 if scenario == "RIGID" else 0.004
    return 0.0005


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = DEFAULT_EPOCHS
    lr: float = 0.0005
    batch_size: int = DEFAULT_BATCH
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")

    @classmethod
    def for_scenario(cls, scenario: str, side: int, seed: int = 0, **kw) -> "TrainingConfig":
        kw.setdefault("lr", default_learning_rate(scenario, side))
        return cls(seed=seed, **kw)


@dataclass
class TrainingReport:
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    best_val_loss: float
    val_accuracy: float
    test_accuracy: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedModel:
    arch: ArchitectureSpec
    network: Network
    report: TrainingReport

    def save(self, path) -> Path:
        path = self.network.save(path, seed=self.report.config.get("seed"), report=self.report.to_dict())
        tmp = Path(path) / "training_report.json.tmp"
        tmp.write_text(json.dumps(self.report.to_dict(), indent=2))
        tmp.replace(Path(path) / "training_report.json")
        return Path(path)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        net = Network.load(path)
        report = TrainingReport(**json.loads((Path(path) / "training_report.json").read_text()))
        return cls(net.arch, net, report)


class TrainingError(RuntimeError):
    pass


def _mean_loss(net: Network, params, x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> float:
    total, n = 0.0, len(y)
    for s in range(0, n, chunk):
        tape = E.Tape()
        pt = [tape.constant(p) for p in params]
        loss = E.cross_entropy(net.forward(tape, tape.constant(x[s:s + chunk]), pt), y[s:s + chunk])
        total += float(loss.data) * len(y[s:s + chunk])
    return total / n


def evaluate_accuracy(model, split: Split) -> float:
    """Fraction of samples whose argmax logit equals the label."""
    if len(split) == 0:
        raise ValueError("cannot evaluate accuracy on an empty sample set")
    net = model.network if isinstance(model, TrainedModel) else model
    pred = net.predict(split.x.astype(np.float64))
    return float(np.mean(pred == split.y))


def train(arch: ArchitectureSpec, dataset: Dataset, config: TrainingConfig,
          progress: Callable[[int, float, float], None] | None = None) -> TrainedModel:
    """Train for ``config.epochs`` epochs and keep the minimum-validation-loss parameters."""
    if dataset.spec.side != arch.side:
        raise ValueError(f"dataset side {dataset.spec.side} does not match architecture side {arch.side}")
    net = Network.init(arch, seed=config.seed)
    rng = np.random.default_rng([config.seed, 1])
    params = net.params
    state = E.AdamState.init(params, config.lr)
    xtr = dataset.train.x.astype(np.float64)
    ytr = dataset.train.y.astype(np.int64)
    xva = dataset.val.x.astype(np.float64)
    yva = dataset.val.y.astype(np.int64)
    n, bs = len(ytr), config.batch_size

    train_curve, val_curve = [], []
    best_loss, best_epoch, best_params = np.inf, -1, params
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            tape = E.Tape()
            pt = [tape.leaf(p) for p in params]
            loss = E.cross_entropy(net.forward(tape, tape.constant(xtr[idx]), pt), ytr[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            running += value * len(idx)
            g = E.backward(tape, loss)
            params, state = E.adam_update(params, [g[p.id] for p in pt], state)
        val_loss = _mean_loss(net, params, xva, yva)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        train_curve.append(running / n)
        val_curve.append(val_loss)
        if val_loss < best_loss:
            best_loss, best_epoch, best_params = val_loss, epoch, params
        if progress is not None:
            progress(epoch, running / n, val_loss)

    best = Network(arch, best_params)
    report = TrainingReport(
        train_loss=train_curve, val_loss=val_curve, best_epoch=best_epoch,
        best_val_loss=float(best_loss),
        val_accuracy=evaluate_accuracy(best, dataset.val),
        test_accuracy=evaluate_accuracy(best, dataset.test) if len(dataset.test) else float("nan"),
        config=asdict(config),
    )
    log.info("trained %s on %s: best epoch %d, test accuracy %.3f", arch.kind, dataset.name,
             best_epoch, report.test_accuracy)
    return TrainedModel(arch, best, report)


def correctly_predicted_intersection(models: Sequence, split: Split) -> np.ndarray:
    """Indices of samples that every model classifies correctly."""
    keep = np.ones(len(split), dtype=bool)
    x = split.x.astype(np.float64)
    for m in models:
        net = m.network if isinstance(m, TrainedModel) else m
        keep &= net.predict(x) == split.y
    return np.flatnonzero(keep)


# ---------------------------------------------------------------- calibration

@dataclass
class CalibrationResult:
    chosen_alpha: float | None
    alphas: list[float]
    accuracies: list[list[float]]  # per alpha, one entry per trial
    threshold: float

    @property
    def mean_accuracies(self) -> list[float]:
        return [float(np.mean(a)) for a in self.accuracies]

    def to_dict(self) -> dict:
        return {"chosen_alpha": self.chosen_alpha, "alphas": self.alphas,
                "accuracies": self.accuracies, "mean_accuracies": self.mean_accuracies,
                "threshold": self.threshold}


class CalibrationError(RuntimeError):
    def __init__(self, message: str, result: CalibrationResult):
        super().__init__(message)
        self.result = result


def choose_alpha(alphas: Sequence[float], mean_accuracies: Sequence[float],
                 threshold: float = ACCURACY_THRESHOLD) -> float | None:
    """Smallest alpha whose mean accuracy reaches the threshold, or None."""
    if list(alphas) != sorted(alphas):
        raise ValueError("alpha grid must be sorted ascending")
    for a, acc in zip(alphas, mean_accuracies):
        if acc >= threshold:
            return float(a)
    return None


def calibrate_snr(template: ScenarioSpec, arch_kind: str, alphas: Sequence[float],
                  trials: int = 10, threshold: float = ACCURACY_THRESHOLD,
                  config: TrainingConfig | None = None) -> CalibrationResult:
    """Sweep alpha; trial k uses dataset seed template.seed + k and model seed k."""
    alphas = [float(a) for a in alphas]
    if alphas != sorted(alphas):
        raise ValueError("alpha grid must be sorted ascending")
    if trials < 1:
        raise ValueError("trials must be positive")
    arch = build_architecture(arch_kind, template.side)
    base = config or TrainingConfig.for_scenario(template.scenario, template.side)
    table = []
    for a in alphas:
        accs = []
        for k in range(trials):
            ds = build_dataset(replace(template, alpha=a, seed=template.seed + k))
            model = train(arch, ds, replace(base, seed=base.seed + k))
            accs.append(model.report.test_accuracy)
        table.append(accs)
        log.info("alpha %.4g: mean test accuracy %.3f", a, float(np.mean(accs)))
    chosen = choose_alpha(alphas, [float(np.mean(t)) for t in table], threshold)
    result = CalibrationResult(chosen, alphas, table, threshold)
    if chosen is None:
        raise CalibrationError(
            f"no alpha in {alphas} reaches mean accuracy {threshold} for {arch_kind} on "
            f"{template.scenario}/{template.background}", result)
    return result
