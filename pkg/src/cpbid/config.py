"""Run configuration: a YAML document validated against a fixed schema.

Unknown keys are rejected at every level and missing keys take the
defaults below. Validation errors name the offending field, e.g.
``strategies.5.gamma``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .conformal import METHODS
from .data import DE_BILT

BENCHMARKS = ("SLQR", "MLQR")
STRATEGIES = ("perfect", "trust", "worst_case", "newsvendor", "eum", "eum_cvar")


class ConfigError(ValueError):
    """Invalid run configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SynthSource(_Strict):
    days: int = Field(1096, ge=3)
    start: str = "2014-01-01"
    lat: float = Field(DE_BILT[0], ge=-90, le=90)
    lon: float = Field(DE_BILT[1], ge=-180, le=180)
    no_arbitrage: bool = False


class CsvSource(_Strict):
    pv: str
    prices: str
    schema_map: dict[str, str] | None = Field(None, alias="schema")
    lat: float = Field(DE_BILT[0], ge=-90, le=90)
    lon: float = Field(DE_BILT[1], ge=-180, le=180)


class Preprocess(_Strict):
    cap: float = Field(1.05, gt=1.0)
    csi_bound: float = Field(1.3, gt=0)
    min_coverage: float = Field(0.5, gt=0, le=1)


class DataConfig(_Strict):
    source: Literal["synth", "csv"] = "synth"
    synth: SynthSource = SynthSource()
    csv: CsvSource | None = None
    preprocess: Preprocess = Preprocess()

    @model_validator(mode="after")
    def _csv_needs_paths(self):
        if self.source == "csv" and self.csv is None:
            raise ValueError("source 'csv' needs a 'csv' section with pv and prices paths")
        return self


class SplitConfig(_Strict):
    train_end: str = "2015-01-01"
    cal_end: str = "2016-01-01"


class ModelConfig(_Strict):
    kind: Literal["rfr", "mlr", "slr"] = "rfr"
    features: list[str] | None = None
    grid: list[tuple[int, int]] | None = None
    n_trees: int = Field(100, ge=1)
    max_features: int | None = Field(None, ge=1)
    min_leaf: int = Field(5, ge=1)
    folds: int = Field(10, ge=2)


class ConformalSection(_Strict):
    methods: list[str] = ["M1", "M2", "M3", "M4", "M5", "SLQR", "MLQR"]
    k: int = Field(50, ge=1)
    n_bins: int = Field(15, ge=1)

    @field_validator("methods")
    @classmethod
    def _known(cls, v):
        allowed = tuple(METHODS) + BENCHMARKS
        bad = [m for m in v if m not in allowed]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; choose from {list(allowed)}")
        if len(set(v)) != len(v):
            raise ValueError("duplicate method names")
        return v


class MarketConfig(_Strict):
    clusters: int = Field(20, ge=1)
    scenarios: int = Field(99, ge=1)
    capacity_mw: float = Field(1.0, gt=0)


class StrategyConfig(_Strict):
    name: Literal["perfect", "trust", "worst_case", "newsvendor", "eum", "eum_cvar"]
    constraint: Literal["prob", "dec"] | None = None
    c: float | None = Field(None, ge=0)
    gamma: float | None = Field(None, gt=0, lt=1)
    beta: float | None = Field(None, ge=0, le=1)
    window: int | None = Field(None, ge=1)
    solver: Literal["auto", "lp", "exact"] = "auto"

    @model_validator(mode="after")
    def _params(self):
        if self.name == "newsvendor":
            if (self.constraint is None) != (self.c is None):
                raise ValueError("newsvendor constraint needs both 'constraint' and 'c'")
        elif self.constraint is not None or self.c is not None:
            raise ValueError(f"'constraint'/'c' only apply to newsvendor, not {self.name}")
        if self.name == "eum_cvar":
            if self.gamma is None or self.beta is None:
                raise ValueError("eum_cvar needs 'gamma' and 'beta'")
        elif self.gamma is not None or self.beta is not None or self.window is not None:
            raise ValueError(f"'gamma'/'beta'/'window' only apply to eum_cvar, not {self.name}")
        return self

    @property
    def label(self) -> str:
        if self.name == "newsvendor" and self.constraint:
            return f"newsvendor_{self.constraint}{round(100 * self.c):g}"
        if self.name == "eum_cvar":
            return f"eum_cvar_g{self.gamma:g}_b{self.beta:g}"
        return self.name


DEFAULT_STRATEGIES = [
    {"name": "perfect"},
    {"name": "trust"},
    {"name": "worst_case"},
    {"name": "newsvendor"},
    {"name": "newsvendor", "constraint": "dec", "c": 0.1},
    {"name": "newsvendor", "constraint": "prob", "c": 0.1},
    {"name": "eum"},
    {"name": "eum_cvar", "gamma": 0.6, "beta": 0.1, "window": 168},
]


class RunConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    out: str | None = None
    data: DataConfig = DataConfig()
    split: SplitConfig = SplitConfig()
    model: ModelConfig = ModelConfig()
    conformal: ConformalSection = ConformalSection()
    market: MarketConfig = MarketConfig()
    strategies: list[StrategyConfig] = [StrategyConfig(**s) for s in DEFAULT_STRATEGIES]

    @model_validator(mode="after")
    def _unique_labels(self):
        labels = [s.label for s in self.strategies]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate strategy entries")
        return self

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


def _format(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def parse_config(data: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as err:
        raise ConfigError(_format(err)) from None


def validate_config(path) -> RunConfig:
    """Load, validate and default-fill the YAML config at ``path``."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
