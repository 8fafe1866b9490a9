"""Benchmark stages over an on-disk artifact store.

Layout under the output root::

    datasets/{dataset}/                      generated arrays + manifest
    calibration/{scenario}_{background}_{side}.json
    {dataset}/intersection.json              test samples every model gets right
    {dataset}/{arch}/seed{k}/                checkpoint + training report
    {dataset}/{arch}/seed{k}/attributions/   attr_{method}_{arch}-seed{k}_test.f32 + index.json
    scores/{dataset}/{arch}/seed{k}/{method}.csv
    report/

Every stage skips work whose recorded input digest and output checksums
still match, so reruns are cheap and interrupted runs resume.
"""

from __future__ import annotations

import csv
import io
import logging
import shutil
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..datagen import ScenarioSpec, build_dataset, load_dataset, save_dataset
from ..datagen.generate import GENERATOR_VERSION
from ..datagen.io import dataset_checksum
from ..explainers import explain_batch, resolve_params
from ..metrics import emd_score, ima_score, precision_score
from ..models import (CalibrationError, TrainedModel, TrainingConfig, build_architecture,
                      calibrate_snr, correctly_predicted_intersection, train)
from .config import BenchmarkConfig, ScenarioConfig
from .store import (digest, read_json, sha256_bytes, sha256_file, stamp_matches, write_bytes,
                    write_json, write_stamp, write_text)

log = logging.getLogger(__name__)

SCORE_COLUMNS = ("scenario", "background", "arch", "method", "sample_id", "emd", "ima",
                 "precision", "degenerate_flag")
SPLIT = "test"


@dataclass(frozen=True)
class Layout:
    root: Path

    def dataset(self, name: str) -> Path:
        return self.root / "datasets" / name

    def calibration(self, scenario: ScenarioConfig) -> Path:
        return self.root / "calibration" / f"{scenario.key}.json"

    def intersection(self, name: str) -> Path:
        return self.root / name / "intersection.json"

    def model(self, name: str, arch: str, k: int) -> Path:
        return self.root / name / arch / f"seed{k}"

    def attributions(self, name: str, arch: str, k: int) -> Path:
        return self.model(name, arch, k) / "attributions"

    def scores(self, name: str, arch: str, k: int) -> Path:
        return self.root / "scores" / name / arch / f"seed{k}"

    @property
    def report(self) -> Path:
        return self.root / "report"


@dataclass(frozen=True)
class Failure:
    stage: str
    cell: str
    error: str

    def to_dict(self) -> dict:
        return {"stage": self.stage, "cell": self.cell, "error": self.error}


class StageError(RuntimeError):
    """A prerequisite artifact is missing or invalid."""


def _failure(stage: str, cell: str, exc: BaseException) -> Failure:
    log.error("%s failed for %s: %s", stage, cell, exc)
    log.debug("%s", traceback.format_exc())
    return Failure(stage, cell, f"{type(exc).__name__}: {exc}")


def _map(fn, jobs, workers: int):
    """Apply ``fn`` to every job, in a process pool when ``workers`` > 1; order preserved."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


# ---------------------------------------------------------------- calibration

def _training_config(cfg: BenchmarkConfig, spec: ScenarioSpec, seed: int) -> TrainingConfig:
    kw = {"epochs": cfg.epochs} if cfg.epochs is not None else {}
    return TrainingConfig.for_scenario(spec.scenario, spec.side, seed=seed, **kw)


def _calibration_key(cfg: BenchmarkConfig, sc: ScenarioConfig) -> str:
    template = sc.spec(sc.alphas[0], cfg.seed).to_dict()
    template.pop("alpha")
    return digest({"template": template, "alphas": sc.alphas, "trials": cfg.calibration_trials,
                   "arch": cfg.calibration_architecture, "threshold": cfg.accuracy_threshold,
                   "training": asdict(_training_config(cfg, sc.spec(sc.alphas[0], cfg.seed), 0)),
                   "generator": GENERATOR_VERSION})


def _needs_calibration(cfg: BenchmarkConfig, sc: ScenarioConfig) -> bool:
    return cfg.calibrate and sc.alphas is not None


def calibrate(cfg: BenchmarkConfig, layout: Layout) -> list[Failure]:
    failures = []
    for sc in cfg.scenarios:
        if not _needs_calibration(cfg, sc):
            continue
        path = layout.calibration(sc)
        key = _calibration_key(cfg, sc)
        if path.is_file() and read_json(path).get("key") == key:
            continue
        log.info("calibrating %s over %d alphas", sc.key, len(sc.alphas))
        template = sc.spec(sc.alphas[0], cfg.seed)
        try:
            result = calibrate_snr(template, cfg.calibration_architecture, sc.alphas,
                                   trials=cfg.calibration_trials, threshold=cfg.accuracy_threshold,
                                   config=_training_config(cfg, template, 0))
            error = None
        except CalibrationError as exc:
            result, error = exc.result, str(exc)
            failures.append(_failure("calibrate", sc.key, exc))
        write_json(path, {"key": key, "scenario": sc.key,
                          "architecture": cfg.calibration_architecture,
                          "error": error, **result.to_dict()})
    return failures


def resolve_specs(cfg: BenchmarkConfig, layout: Layout) -> list[tuple[ScenarioConfig, ScenarioSpec | None]]:
    """The dataset spec of every scenario; None when calibration has not produced an alpha."""
    out = []
    for sc in cfg.scenarios:
        if _needs_calibration(cfg, sc):
            path = layout.calibration(sc)
            alpha = None
            if path.is_file():
                record = read_json(path)
                if record.get("key") == _calibration_key(cfg, sc):
                    alpha = record.get("chosen_alpha")
            out.append((sc, None if alpha is None else sc.spec(alpha, cfg.seed)))
        else:
            out.append((sc, sc.spec(sc.alpha, cfg.seed)))
    return out


def _specs_or_fail(cfg, layout, stage) -> tuple[list[tuple[ScenarioConfig, ScenarioSpec]], list[Failure]]:
    ready, failures = [], []
    for sc, spec in resolve_specs(cfg, layout):
        if spec is None:
            failures.append(Failure(stage, sc.key, "no calibrated alpha available"))
        else:
            ready.append((sc, spec))
    return ready, failures


# ---------------------------------------------------------------- generation

def _dataset_key(spec: ScenarioSpec) -> str:
    return digest({"spec": spec.to_dict(), "generator": GENERATOR_VERSION})


def generate(cfg: BenchmarkConfig, layout: Layout) -> list[Failure]:
    ready, failures = _specs_or_fail(cfg, layout, "generate")
    seen = set()
    for _, spec in ready:
        if spec.name in seen:
            continue
        seen.add(spec.name)
        target = layout.dataset(spec.name)
        key = _dataset_key(spec)
        if stamp_matches(target, key):
            continue
        log.info("generating %s", spec.name)
        try:
            path = save_dataset(build_dataset(spec), layout.root / "datasets")
            write_stamp(path, key, files=sorted(p.name for p in path.iterdir()))
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            failures.append(_failure("generate", spec.name, exc))
    return failures


def _require_dataset(layout: Layout, spec: ScenarioSpec) -> Path:
    path = layout.dataset(spec.name)
    if not stamp_matches(path, _dataset_key(spec)):
        raise StageError(f"dataset {spec.name} has not been generated")
    return path


# ---------------------------------------------------------------- training

def _model_key(cfg: BenchmarkConfig, spec: ScenarioSpec, arch: str, k: int, data_sum: str) -> str:
    return digest({"dataset": data_sum, "arch": build_architecture(arch, spec.side).to_dict(),
                   "training": asdict(_training_config(cfg, spec, cfg.seed + k))})


def _train_cell(cfg: BenchmarkConfig, root: str, spec_dict: dict, arch: str, k: int):
    layout = Layout(Path(root))
    spec = ScenarioSpec.from_dict(spec_dict)
    cell = f"{spec.name}/{arch}/seed{k}"
    try:
        data_path = _require_dataset(layout, spec)
        target = layout.model(spec.name, arch, k)
        key = _model_key(cfg, spec, arch, k, dataset_checksum(data_path))
        if stamp_matches(target, key):
            return None
        log.info("training %s", cell)
        model = train(build_architecture(arch, spec.side), load_dataset(data_path),
                      _training_config(cfg, spec, cfg.seed + k))
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".seed{k}.", dir=target.parent))
        try:
            model.save(tmp)
            keep = target / "attributions"
            if keep.is_dir():  # explanations are keyed on the model and invalidate themselves
                shutil.move(str(keep), tmp / "attributions")
            if target.exists():
                shutil.rmtree(target)
            tmp.replace(target)
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        write_stamp(target, key, files=sorted(p.name for p in target.iterdir() if p.is_file()))
        return None
    except Exception as exc:  # noqa: BLE001
        return _failure("train", cell, exc)


def _model_cells(cfg, ready):
    return [(sc, spec, arch, k) for sc, spec in ready for arch in cfg.architectures_for(sc)
            for k in range(cfg.trainings)]


def train_models(cfg: BenchmarkConfig, layout: Layout) -> list[Failure]:
    ready, failures = _specs_or_fail(cfg, layout, "train")
    jobs = [(cfg, str(layout.root), spec.to_dict(), arch, k)
            for _, spec, arch, k in _model_cells(cfg, ready)]
    failures += [f for f in _map(_train_cell, jobs, cfg.workers) if f is not None]
    return failures


def _load_model(cfg, layout, spec, arch, k) -> tuple[TrainedModel, str]:
    path = layout.model(spec.name, arch, k)
    key = _model_key(cfg, spec, arch, k, dataset_checksum(_require_dataset(layout, spec)))
    if not stamp_matches(path, key):
        raise StageError(f"model {spec.name}/{arch}/seed{k} has not been trained")
    return TrainedModel.load(path), key


# ---------------------------------------------------------------- intersection

def intersect(cfg: BenchmarkConfig, layout: Layout) -> list[Failure]:
    """Per dataset, the test samples that every trained model predicts correctly."""
    ready, failures = _specs_or_fail(cfg, layout, "intersect")
    groups: dict[str, tuple[ScenarioSpec, list]] = {}
    for sc, spec, arch, k in _model_cells(cfg, ready):
        groups.setdefault(spec.name, (spec, []))[1].append((arch, k))
    for name, (spec, members) in groups.items():
        try:
            members = sorted(set(members))
            loaded = [_load_model(cfg, layout, spec, a, k) for a, k in members]
            key = digest({"models": [mk for _, mk in loaded]})
            path = layout.intersection(name)
            if path.is_file() and read_json(path).get("key") == key:
                continue
            ds = load_dataset(_require_dataset(layout, spec))
            idx = correctly_predicted_intersection([m for m, _ in loaded], ds.test)
            write_json(path, {
                "key": key, "split": SPLIT, "n_split": len(ds.test),
                "models": [f"{a}/seed{k}" for a, k in members],
                "test_accuracy": {f"{a}/seed{k}": m.report.test_accuracy
                                  for (a, k), (m, _) in zip(members, loaded)},
                "indices": [int(i) for i in idx],
            })
        except Exception as exc:  # noqa: BLE001
            failures.append(_failure("intersect", name, exc))
    return failures


def _load_intersection(layout: Layout, name: str) -> dict:
    path = layout.intersection(name)
    if not path.is_file():
        raise StageError(f"no correctly-predicted intersection for {name}")
    return read_json(path)


# ---------------------------------------------------------------- explanation

def attribution_filename(method: str, arch: str, k: int, split: str = SPLIT) -> str:
    return f"attr_{method}_{arch}-seed{k}_{split}.f32"


def _explain_cell(cfg: BenchmarkConfig, root: str, spec_dict: dict, arch: str, k: int):
    layout = Layout(Path(root))
    spec = ScenarioSpec.from_dict(spec_dict)
    cell = f"{spec.name}/{arch}/seed{k}"
    failures = []
    try:
        model, model_key = _load_model(cfg, layout, spec, arch, k)
        inter = _load_intersection(layout, spec.name)
        ids = np.asarray(inter["indices"], dtype=np.int64)
        if cfg.max_samples is not None:
            ids = ids[:cfg.max_samples]
        out = layout.attributions(spec.name, arch, k)
        index_path = out / "index.json"
        index = read_json(index_path) if index_path.is_file() else {}
        ds = None
        for method in cfg.methods:
            params = resolve_params(method, cfg.method_params.get(method), spec.side)
            key = digest({"model": model_key, "intersection": inter["key"],
                          "samples": ids.tolist(), "method": method, "params": params,
                          "seed": cfg.seed})
            entry = index.get(method)
            fname = attribution_filename(method, arch, k)
            if (entry and entry.get("key") == key and (out / fname).is_file()
                    and sha256_file(out / fname) == entry.get("sha256")):
                continue
            try:
                if ds is None:
                    ds = load_dataset(_require_dataset(layout, spec))
                    X = ds.test.x.astype(np.float64)
                    y = ds.test.y.astype(np.int64)
                log.info("explaining %s with %s (%d samples)", cell, method, len(ids))
                maps = explain_batch(method, model, X[ids], y[ids], sample_ids=ids,
                                     params=cfg.method_params.get(method), seed=cfg.seed,
                                     reference=(X, y))
                grids = np.stack([m.grid for m in maps]) if maps else np.zeros(
                    (0, spec.side, spec.side))
                raw = np.ascontiguousarray(grids, dtype="<f4").tobytes()
                write_bytes(out / fname, raw)
                index[method] = {"file": fname, "sha256": sha256_bytes(raw), "key": key,
                                 "params": params, "seed": cfg.seed, "split": SPLIT,
                                 "shape": list(grids.shape), "sample_ids": ids.tolist(),
                                 "model": f"{arch}-seed{k}"}
            except Exception as exc:  # noqa: BLE001
                index.pop(method, None)
                failures.append(_failure("explain", f"{cell}/{method}", exc))
            write_json(index_path, index)
    except Exception as exc:  # noqa: BLE001
        failures.append(_failure("explain", cell, exc))
    return failures


def explain(cfg: BenchmarkConfig, layout: Layout) -> list[Failure]:
    ready, failures = _specs_or_fail(cfg, layout, "explain")
    jobs = [(cfg, str(layout.root), spec.to_dict(), arch, k)
            for _, spec, arch, k in _model_cells(cfg, ready)]
    for f in _map(_explain_cell, jobs, cfg.workers):
        failures += f
    return failures


def load_attributions(layout: Layout, name: str, arch: str, k: int, method: str):
    """(maps, sample_ids) for one persisted attribution file, checksum-verified."""
    out = layout.attributions(name, arch, k)
    index_path = out / "index.json"
    if not index_path.is_file():
        raise StageError(f"no attributions for {name}/{arch}/seed{k}")
    entry = read_json(index_path).get(method)
    if entry is None:
        raise StageError(f"no {method} attributions for {name}/{arch}/seed{k}")
    raw = (out / entry["file"]).read_bytes()
    if sha256_bytes(raw) != entry["sha256"]:
        raise StageError(f"{out / entry['file']}: checksum mismatch")
    maps = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).astype(np.float64)
    return maps, np.asarray(entry["sample_ids"], dtype=np.int64), entry


# ---------------------------------------------------------------- scoring

def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def score_rows(spec: ScenarioSpec, arch: str, method: str, maps, masks, sample_ids,
               metrics) -> str:
    """CSV text with one row per map; metrics not requested are left empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS)
    for g, m, sid in zip(maps, masks, sample_ids):
        degenerate = not np.abs(g).sum() > 0
        emd = emd_score(g, m) if "emd" in metrics else None
        ima = ima_score(g, m) if "ima" in metrics else None
        prec = precision_score(g, m) if "precision" in metrics else None
        w.writerow([spec.scenario, spec.background, arch, method, int(sid), _fmt(emd), _fmt(ima),
                    _fmt(prec), int(degenerate)])
    return buf.getvalue()


def _score_cell(cfg: BenchmarkConfig, root: str, spec_dict: dict, arch: str, k: int):
    layout = Layout(Path(root))
    spec = ScenarioSpec.from_dict(spec_dict)
    cell = f"{spec.name}/{arch}/seed{k}"
    failures = []
    out = layout.scores(spec.name, arch, k)
    index_path = out / "index.json"
    index = read_json(index_path) if index_path.is_file() else {}
    masks = None
    for method in cfg.methods:
        try:
            maps, ids, entry = load_attributions(layout, spec.name, arch, k, method)
            key = digest({"attributions": entry["sha256"], "metrics": sorted(cfg.metrics),
                          "dataset": _dataset_key(spec)})
            csv_path = out / f"{method}.csv"
            done = index.get(method)
            if (done and done.get("key") == key and csv_path.is_file()
                    and sha256_file(csv_path) == done.get("sha256")):
                continue
            if masks is None:
                masks = load_dataset(_require_dataset(layout, spec)).test.masks
            log.info("scoring %s/%s (%d maps)", cell, method, len(ids))
            text = score_rows(spec, arch, method, maps, masks[ids], ids, cfg.metrics)
            write_text(csv_path, text)
            index[method] = {"key": key, "sha256": sha256_bytes(text.encode()),
                             "attributions": str(layout.attributions(spec.name, arch, k)
                                                 .relative_to(layout.root) / entry["file"])}
        except Exception as exc:  # noqa: BLE001
            index.pop(method, None)
            failures.append(_failure("score", f"{cell}/{method}", exc))
    if index or index_path.is_file():
        write_json(index_path, index)
    return failures


def score(cfg: BenchmarkConfig, layout: Layout) -> list[Failure]:
    ready, failures = _specs_or_fail(cfg, layout, "score")
    jobs = [(cfg, str(layout.root), spec.to_dict(), arch, k)
            for _, spec, arch, k in _model_cells(cfg, ready)]
    for f in _map(_score_cell, jobs, cfg.workers):
        failures += f
    return failures


def expected_cells(cfg: BenchmarkConfig) -> list[tuple[str, str, str, str]]:
    """(scenario, background, arch, method) cells the config asks for."""
    cells = []
    for sc in cfg.scenarios:
        for arch in cfg.architectures_for(sc):
            for method in cfg.methods:
                cell = (sc.scenario, sc.background, arch, method)
                if cell not in cells:
                    cells.append(cell)
    return cells
