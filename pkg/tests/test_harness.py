import csv
import json
import statistics
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from tetrobench.harness import (BenchmarkConfig, ConfigError, aggregate, box_stats,
                                config_schema, emit_report, load_config)
from tetrobench.harness.cli import main
from tetrobench.harness.pipeline import SCORE_COLUMNS
from tetrobench.harness.report import SUMMARY_COLUMNS


def tiny_config(tmp_path, **extra):
    cfg = {
        "scenarios": [{"scenario": "LIN", "background": "WHITE", "alpha": 0.3,
                       "overrides": {"n_samples": 300}}],
        "architectures": ["LLR"],
        "trainings": 2,
        "epochs": 3,
        "methods": ["saliency", "integrated_gradients", "sobel"],
        "method_params": {"integrated_gradients": {"steps": 8}},
        "output_root": str(tmp_path / "out"),
    }
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------- configuration

def test_config_validation(tmp_path):
    base = json.loads(tiny_config(tmp_path).read_text())
    assert load_config(tiny_config(tmp_path)).architectures == ["LLR"]
    bad = [
        {"methods": ["saliency", "gradcam"]},
        {"architectures": ["RNN"]},
        {"method_params": {"saliency": {"steps": 3}}},
        {"scenarios": [{"scenario": "LIN", "background": "WHITE"}]},
        {"scenarios": [{"scenario": "LIN", "background": "WHITE", "alpha": 1.5}]},
        {"scenarios": [{"scenario": "LIN", "background": "WHITE", "alphas": [0.3, 0.1]}],
         "calibrate": True},
        {"scenarios": [{"scenario": "LIN", "background": "WHITE", "alpha": 0.2,
                        "overrides": {"seed": 3}}]},
        {"metrics": ["auc"]},
        {"unexpected": 1},
    ]
    for patch in bad:
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({**base, **patch}))
        with pytest.raises(ConfigError):
            load_config(path)
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_overrides_and_lowercase_architectures(tmp_path):
    cfg = load_config(tiny_config(tmp_path, architectures=["llr", "mlp"]), seed=9, workers=None)
    assert cfg.architectures == ["LLR", "MLP"] and cfg.seed == 9 and cfg.workers == 1


def test_shipped_schema_is_current():
    shipped = json.loads(resources.files("tetrobench").joinpath(
        "schema/benchmark_config.schema.json").read_text())
    assert shipped == config_schema()


def test_shipped_configs_validate():
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.json")):
        assert isinstance(load_config(path), BenchmarkConfig)


# ---------------------------------------------------------------- statistics

def test_box_stats_small_samples():
    s = box_stats([0.0, 0.5, 1.0])
    assert (s["median"], s["q1"], s["q3"]) == (0.5, 0.25, 0.75)
    assert (s["whisker_low"], s["whisker_high"], s["n_outliers"]) == (0.0, 1.0, 0)
    same = box_stats([0.4] * 7)
    assert same["q1"] == same["q3"] == same["median"] == 0.4 and same["n_outliers"] == 0
    assert box_stats([]) == {"n": 0, "missing": True}
    out = box_stats([0.5, 0.51, 0.52, 0.53, 0.0])
    assert out["n_outliers"] == 1 and out["whisker_low"] == 0.5


def write_scores(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SCORE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def test_aggregate_matches_independent_quantiles(tmp_path):
    rng = np.random.default_rng(0)
    files, raw = [], {}
    for k, (arch, bg) in enumerate([("LLR", "WHITE"), ("MLP", "CORR"), ("LLR", "CORR")]):
        rows = []
        for i in range(int(rng.integers(5, 40))):
            v = rng.random(3)
            rows.append({"scenario": "LIN", "background": bg, "arch": arch,
                         "method": "saliency", "sample_id": i, "emd": repr(float(v[0])),
                         "ima": repr(float(v[1])), "precision": repr(float(v[2])), "degenerate_flag": 0})
            raw.setdefault((bg, arch), []).append(v)
        f = tmp_path / f"s{k}.csv"
        write_scores(f, rows)
        files.append(f)
    rep = aggregate(files, expected_cells=[("LIN", "WHITE", "CNN", "saliency")])
    cells = [(c["background"], c["arch"]) for c in rep["cells"]]
    assert cells == [("WHITE", "CNN"), ("WHITE", "LLR"), ("CORR", "LLR"), ("CORR", "MLP")]
    for c in rep["cells"]:
        vals = raw.get((c["background"], c["arch"]))
        if vals is None:
            assert all(c["metrics"][m]["missing"] for m in ("emd", "ima", "precision"))
            continue
        for j, m in enumerate(("emd", "ima", "precision")):
            col = [v[j] for v in vals]
            q1, med, q3 = statistics.quantiles(col, n=4, method="inclusive")
            s = c["metrics"][m]
            assert s["n"] == len(col)
            assert s["median"] == pytest.approx(med, abs=1e-12)
            assert s["q1"] == pytest.approx(q1, abs=1e-12)
            assert s["q3"] == pytest.approx(q3, abs=1e-12)


def test_emit_report_empty_and_counts(tmp_path):
    rep = aggregate([], expected_cells=[("XOR", "CORR", "MLP", "lime")])
    paths = emit_report(rep, tmp_path / "r")
    assert sorted(p.name for p in paths) == ["boxplots.svg", "report.json", "summary.csv"]
    rows = list(csv.DictReader(open(tmp_path / "r" / "summary.csv")))
    assert len(rows) == 3 and all(r["missing"] == "1" for r in rows)
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert (tmp_path / "r" / "boxplots.svg").read_bytes().startswith(b"<?xml")
    empty = emit_report(aggregate([]), tmp_path / "e")
    assert json.loads(empty[1].read_text())["cells"] == []


# ---------------------------------------------------------------- end to end

def test_cli_run_idempotent_and_report_regeneration(tmp_path):
    cfg = tiny_config(tmp_path)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    rows = list(csv.DictReader(open(out / "report" / "summary.csv")))
    # 1 scenario x 1 arch x 3 methods x 3 metrics
    assert len(rows) == 9 and all(r["missing"] == "0" for r in rows)
    svg = (out / "report" / "boxplots.svg").read_text()
    assert svg.count("LIN / ") == 3
    report = json.loads((out / "report" / "report.json").read_text())
    assert report["provenance"]["lineage"]

    before = tree_bytes(out)
    mtimes = {p: p.stat().st_mtime_ns for p in out.rglob("*.f32")}
    assert main(["run", "--config", str(cfg)]) == 0
    assert tree_bytes(out) == before
    assert {p: p.stat().st_mtime_ns for p in out.rglob("*.f32")} == mtimes

    for p in (out / "report").iterdir():
        p.unlink()
    assert main(["report", "--config", str(cfg)]) == 0
    assert tree_bytes(out) == before


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenarios": [], "methods": ["saliency"]}))
    assert main(["run", "--config", str(bad)]) == 1
    assert "config error" in capsys.readouterr().err

    empty_dir = tmp_path / "no_images"
    empty_dir.mkdir()
    cfg = tiny_config(tmp_path, scenarios=[
        {"scenario": "LIN", "background": "WHITE", "alpha": 0.3, "overrides": {"n_samples": 300}},
        {"scenario": "LIN", "background": "IMAGENET", "alpha": 0.3,
         "overrides": {"n_samples": 300, "image_dir": str(empty_dir)}},
    ], trainings=1)
    assert main(["run", "--config", str(cfg)]) == 2
    out = tmp_path / "out"
    failures = json.loads((out / "report" / "failures.json").read_text())
    assert failures and failures[0]["stage"] == "generate"
    rows = list(csv.DictReader(open(out / "report" / "summary.csv")))
    missing = {(r["background"], r["missing"]) for r in rows}
    assert missing == {("WHITE", "0"), ("IMAGENET", "1")}


def test_workers_do_not_change_results(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a, b = tiny_config(tmp_path / "a"), tiny_config(tmp_path / "b")
    assert main(["run", "--config", str(a)]) == 0
    assert main(["run", "--config", str(b), "--workers", "2"]) == 0
    sa = tree_bytes(tmp_path / "a" / "out" / "scores")
    sb = tree_bytes(tmp_path / "b" / "out" / "scores")
    csvs = [k for k in sa if k.endswith(".csv")]
    assert csvs and all(sa[k] == sb[k] for k in csvs)
