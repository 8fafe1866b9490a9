"""Benchmark orchestration: config, pipeline stages, aggregation and the CLI."""

from .config import BenchmarkConfig, ConfigError, ScenarioConfig, config_schema, load_config
from .pipeline import SCORE_COLUMNS, Failure, Layout, expected_cells
from .report import aggregate, box_stats, emit_report
from .runner import STAGES, build_report, run, stages_through

__all__ = [
    "BenchmarkConfig", "ConfigError", "ScenarioConfig", "config_schema", "load_config",
    "SCORE_COLUMNS", "Failure", "Layout", "expected_cells", "aggregate", "box_stats",
    "emit_report", "STAGES", "build_report", "run", "stages_through",
]
