"""Boxplot statistics over persisted score CSVs and report files."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .pipeline import SCORE_COLUMNS
from .store import read_json, sha256_file, write_bytes, write_json, write_text

METRIC_NAMES = ("emd", "ima", "precision")
BACKGROUND_ORDER = ("WHITE", "CORR", "IMAGENET")
CONVENTION = ("median and quartiles by linear interpolation between order statistics; "
              "whiskers at the most extreme scores within 1.5 IQR of the box (Tukey); "
              "scores beyond the whiskers are counted as outliers")
SUMMARY_COLUMNS = ("scenario", "background", "arch", "method", "metric", "n", "median", "q1",
                   "q3", "whisker_low", "whisker_high", "n_outliers", "missing")


def box_stats(values) -> dict:
    """Tukey box summary of one sample; ``missing`` when there is nothing to summarise."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        return {"n": 0, "missing": True}
    q1, med, q3 = (float(np.percentile(v, q, method="linear")) for q in (25, 50, 75))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {"n": int(v.size), "median": med, "q1": q1, "q3": q3,
            "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
            "n_outliers": int(v.size - inside.size), "missing": False}


def read_scores(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCORE_COLUMNS:
            raise ValueError(f"{path}: columns {reader.fieldnames} do not match {list(SCORE_COLUMNS)}")
        return list(reader)


def aggregate(score_files, expected_cells=(), root=None, calibration=None,
              lineage=None) -> dict:
    """Report dict computed only from the given CSVs (plus optional calibration tables).

    Cells listed in ``expected_cells`` without any score are reported as
    missing rather than zero. ``lineage`` maps a score file to the artifacts
    it was computed from and is copied into the provenance section.
    """
    root = Path(root) if root is not None else None
    files = sorted(Path(f) for f in score_files)
    values: dict[tuple, dict[str, list[float]]] = {}
    provenance: dict[tuple, list[str]] = {}
    file_digests = {}
    for f in files:
        rel = str(f.relative_to(root)) if root is not None else str(f)
        file_digests[rel] = sha256_file(f)
        for row in read_scores(f):
            cell = (row["scenario"], row["background"], row["arch"], row["method"])
            bucket = values.setdefault(cell, {m: [] for m in METRIC_NAMES})
            for m in METRIC_NAMES:
                if row[m] != "":
                    bucket[m].append(float(row[m]))
            if rel not in provenance.setdefault(cell, []):
                provenance[cell].append(rel)
    cells = sorted(set(values) | {tuple(c) for c in expected_cells},
                   key=lambda c: (c[0], _bg_rank(c[1]), c[1], c[2], c[3]))
    out = []
    for cell in cells:
        bucket = values.get(cell, {m: [] for m in METRIC_NAMES})
        out.append({
            "scenario": cell[0], "background": cell[1], "arch": cell[2], "method": cell[3],
            "metrics": {m: box_stats(bucket[m]) for m in METRIC_NAMES},
            "sources": provenance.get(cell, []),
        })
    return {"convention": CONVENTION, "cells": out, "calibration": calibration or {},
            "provenance": {"score_files": file_digests, "lineage": dict(sorted((lineage or {}).items()))}}


def _bg_rank(bg: str) -> int:
    return BACKGROUND_ORDER.index(bg) if bg in BACKGROUND_ORDER else len(BACKGROUND_ORDER)


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def summary_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for c in report["cells"]:
        for m in METRIC_NAMES:
            s = c["metrics"][m]
            if s["missing"]:
                w.writerow([c["scenario"], c["background"], c["arch"], c["method"], m, 0,
                            "", "", "", "", "", "", 1])
            else:
                w.writerow([c["scenario"], c["background"], c["arch"], c["method"], m, s["n"],
                            _num(s["median"]), _num(s["q1"]), _num(s["q3"]),
                            _num(s["whisker_low"]), _num(s["whisker_high"]), s["n_outliers"], 0])
    return buf.getvalue()


def boxplot_svg(report: dict) -> bytes:
    """One panel per (scenario, metric); boxes per (arch, method), shaded by background."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cells = report["cells"]
    scenarios = sorted({c["scenario"] for c in cells})
    with matplotlib.rc_context({"svg.hashsalt": "tetrobench", "svg.fonttype": "none"}):
        if not scenarios:
            fig, ax = plt.subplots(figsize=(4, 2))
            ax.axis("off")
            ax.text(0.5, 0.5, "no scores", ha="center", va="center")
        else:
            fig, axes = plt.subplots(len(scenarios), len(METRIC_NAMES), squeeze=False,
                                     figsize=(4.5 * len(METRIC_NAMES), 3.2 * len(scenarios)))
            for r, scen in enumerate(scenarios):
                rows = [c for c in cells if c["scenario"] == scen]
                for col, metric in enumerate(METRIC_NAMES):
                    _panel(axes[r][col], rows, metric, f"{scen} / {metric}")
            fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def _panel(ax, rows, metric, title):
    shades = {"WHITE": "#ffffff", "CORR": "#e8e8e8", "IMAGENET": "#d0d0d0"}
    stats, labels, spans = [], [], []
    for bg in sorted({c["background"] for c in rows}, key=lambda b: (_bg_rank(b), b)):
        start = len(labels)
        for c in rows:
            if c["background"] != bg:
                continue
            s = c["metrics"][metric]
            labels.append(f"{c['arch']}\n{c['method']}")
            if s["missing"]:
                stats.append(None)
            else:
                stats.append({"med": s["median"], "q1": s["q1"], "q3": s["q3"],
                              "whislo": s["whisker_low"], "whishi": s["whisker_high"],
                              "fliers": [], "label": labels[-1]})
        spans.append((bg, start, len(labels)))
    for bg, a, b in spans:
        ax.axvspan(a + 0.5, b + 0.5, color=shades.get(bg, "#f4f4f4"), zorder=0)
        ax.text((a + b + 1) / 2, 1.02, bg, ha="center", va="bottom", fontsize=7)
    present = [(i + 1, s) for i, s in enumerate(stats) if s is not None]
    if present:
        ax.bxp([s for _, s in present], positions=[p for p, _ in present], showfliers=False)
    ax.set_xlim(0.5, len(labels) + 0.5)
    ax.set_ylim(-0.02, 1.08)
    ax.set_xticks(range(1, len(labels) + 1))
    ax.set_xticklabels(labels, rotation=90, fontsize=6)
    ax.set_title(title, fontsize=9, pad=12)


def emit_report(report: dict, out_dir, formats=("csv", "json", "svg")) -> list[Path]:
    """Write the requested report files atomically; returns their paths."""
    out_dir = Path(out_dir)
    unknown = set(formats) - {"csv", "json", "svg"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    written = []
    if "csv" in formats:
        written.append(write_text(out_dir / "summary.csv", summary_csv(report)))
    if "json" in formats:
        written.append(write_json(out_dir / "report.json", report))
    if "svg" in formats:
        written.append(write_bytes(out_dir / "boxplots.svg", boxplot_svg(report)))
    return written


def load_calibration(directory) -> dict:
    directory = Path(directory)
    if not directory.is_dir():
        return {}
    return {p.stem: {k: v for k, v in read_json(p).items() if k != "key"}
            for p in sorted(directory.glob("*.json"))}
