"""Benchmark configuration: one JSON document validated before any compute."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..datagen import ScenarioSpec
from ..explainers import METHODS, available_methods, resolve_params
from ..models import ARCHITECTURES

METRICS = ("emd", "ima", "precision")


class ConfigError(ValueError):
    """The configuration cannot be loaded or is inconsistent."""


class ScenarioConfig(BaseModel):
    """One dataset family. Give ``alpha`` directly, or an ``alphas`` grid to calibrate over."""

    model_config = ConfigDict(extra="forbid")

    scenario: Literal["LIN", "MULT", "RIGID", "XOR"]
    background: Literal["WHITE", "CORR", "IMAGENET"]
    side: int = Field(8, ge=4, description="image side length in pixels")
    alpha: float | None = Field(None, ge=0.0, le=1.0, description="signal weight")
    alphas: list[float] | None = Field(None, description="ascending grid for SNR calibration")
    architectures: list[str] | None = Field(
        None, description="overrides the global architecture list for this scenario")
    overrides: dict[str, Any] = Field(
        default_factory=dict,
        description="ScenarioSpec fields replacing the scale defaults, e.g. n_samples or image_dir")

    @field_validator("alphas")
    @classmethod
    def _sorted(cls, v):
        if v is not None:
            if not v:
                raise ValueError("alphas must not be empty")
            if list(v) != sorted(v) or any(not 0.0 <= a <= 1.0 for a in v):
                raise ValueError("alphas must be ascending values in [0, 1]")
        return v

    @model_validator(mode="after")
    def _alpha_given(self):
        if self.alpha is None and self.alphas is None:
            raise ValueError("give alpha or an alphas grid")
        forbidden = {"scenario", "background", "side", "alpha", "seed"} & set(self.overrides)
        if forbidden:
            raise ValueError(f"overrides may not set {sorted(forbidden)}")
        try:
            self.spec(self.alpha if self.alpha is not None else self.alphas[0], seed=0)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"invalid scenario: {exc}") from exc
        return self

    def spec(self, alpha: float, seed: int) -> ScenarioSpec:
        return ScenarioSpec.paper_defaults(self.scenario, self.background, side=self.side,
                                           alpha=alpha, seed=seed, **self.overrides)

    @property
    def key(self) -> str:
        """Stable label used for calibration files."""
        return f"{self.scenario}_{self.background}_{self.side}"


class BenchmarkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenarios: list[ScenarioConfig] = Field(..., min_length=1)
    architectures: list[str] = Field(default_factory=lambda: list(ARCHITECTURES))
    trainings: int = Field(5, ge=1, description="models trained per (dataset, architecture)")
    epochs: int | None = Field(None, ge=1, description="training epochs; default is the full schedule")
    calibrate: bool = Field(False, description="choose alpha by sweeping each scenario's alphas grid")
    calibration_trials: int = Field(10, ge=1)
    calibration_architecture: str = "MLP"
    accuracy_threshold: float = Field(0.8, gt=0.0, le=1.0)
    methods: list[str] = Field(default_factory=available_methods, min_length=1)
    method_params: dict[str, dict[str, Any]] = Field(default_factory=dict)
    metrics: list[Literal["emd", "ima", "precision"]] = Field(default_factory=lambda: list(METRICS))
    seed: int = Field(0, ge=0)
    output_root: str = "tetrobench-out"
    max_samples: int | None = Field(None, ge=1, description="cap on explained samples per model")
    workers: int = Field(1, ge=1)

    @field_validator("architectures")
    @classmethod
    def _known_archs(cls, v):
        v = [a.upper() for a in v]
        unknown = [a for a in v if a not in ARCHITECTURES]
        if unknown:
            raise ValueError(f"unknown architectures {unknown}; registered: {list(ARCHITECTURES)}")
        if not v or len(set(v)) != len(v):
            raise ValueError("architectures must be a non-empty list without duplicates")
        return v

    @field_validator("calibration_architecture")
    @classmethod
    def _known_cal_arch(cls, v):
        v = v.upper()
        if v not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {v!r}; registered: {list(ARCHITECTURES)}")
        return v

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, v):
        unknown = [m for m in v if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; registered: {available_methods()}")
        if len(set(v)) != len(v):
            raise ValueError("methods contain duplicates")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        for s in self.scenarios:
            if s.architectures is not None:
                s.architectures = self._known_archs(s.architectures)
            if s.alpha is None and not self.calibrate:
                raise ValueError(f"{s.key}: no alpha given and calibration is off")
        for m, params in self.method_params.items():
            if m not in self.methods:
                raise ValueError(f"method_params names {m!r}, which is not in methods")
            resolve_params(m, params, 8)
        return self

    def architectures_for(self, scenario: ScenarioConfig) -> list[str]:
        return scenario.architectures if scenario.architectures is not None else self.architectures


def load_config(path, **overrides) -> BenchmarkConfig:
    """Read and validate a config file; keyword overrides replace top-level fields."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return BenchmarkConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_schema() -> dict:
    return BenchmarkConfig.model_json_schema()
