"""Stage orchestration shared by the CLI and library callers."""

from __future__ import annotations

import logging
from pathlib import Path

from . import pipeline as P
from .config import BenchmarkConfig
from .report import aggregate, emit_report, load_calibration
from .store import read_json, write_json

log = logging.getLogger(__name__)

STAGES = ("calibrate", "generate", "train", "intersect", "explain", "score", "report")
_STAGE_FN = {
    "calibrate": P.calibrate, "generate": P.generate, "train": P.train_models,
    "intersect": P.intersect, "explain": P.explain, "score": P.score,
}


def stages_through(last: str) -> list[str]:
    """All stages up to and including ``last``; calibration only runs when asked for."""
    if last not in STAGES:
        raise ValueError(f"unknown stage {last!r}; expected one of {STAGES}")
    if last == "report":
        return ["report"]
    return list(STAGES[:STAGES.index(last) + 1])


def build_report(cfg: BenchmarkConfig, root) -> dict:
    """Aggregate every score CSV under ``root``; a pure function of the stored files."""
    layout = P.Layout(Path(root))
    scores_dir = layout.root / "scores"
    files = sorted(scores_dir.rglob("*.csv")) if scores_dir.is_dir() else []
    lineage = {}
    for f in files:
        index = f.parent / "index.json"
        if index.is_file():
            entry = read_json(index).get(f.stem)
            if entry:
                lineage[str(f.relative_to(layout.root))] = entry["attributions"]
    return aggregate(files, P.expected_cells(cfg), root=layout.root,
                     calibration=load_calibration(layout.root / "calibration"), lineage=lineage)


def run(cfg: BenchmarkConfig, stages=None, root=None) -> tuple[dict | None, list[P.Failure]]:
    """Execute ``stages`` in order; returns the report (when built) and all recorded failures."""
    layout = P.Layout(Path(root or cfg.output_root))
    layout.root.mkdir(parents=True, exist_ok=True)
    stages = list(stages or STAGES)
    failures: list[P.Failure] = []
    report = None
    for stage in STAGES:
        if stage not in stages:
            continue
        if stage == "calibrate" and not cfg.calibrate and stages != ["calibrate"]:
            continue
        if stage == "report":
            report = build_report(cfg, layout.root)
            emit_report(report, layout.report)
            continue
        log.info("stage %s", stage)
        if stage == "calibrate" and not cfg.calibrate:
            cfg = cfg.model_copy(update={"calibrate": True})
        failures += _STAGE_FN[stage](cfg, layout)
    failure_file = layout.report / "failures.json"
    if failures or failure_file.is_file():
        write_json(failure_file, [f.to_dict() for f in failures])
    return report, failures
