"""Request and response models of the HTTP service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..harness.config import ExperimentConfig, config_from_dict, load_config, merge_overrides


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConfigRef(_Model):
    """Where the experiment config comes from: an inline dict, a file, or a preset plus overrides."""

    config: Optional[dict[str, Any]] = None
    config_path: Optional[str] = None
    preset: Optional[str] = None
    overrides: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _one_source(self):
        given = sum(x is not None for x in (self.config, self.config_path, self.preset))
        if given != 1:
            raise ValueError("give exactly one of config, config_path or preset")
        return self

    def resolve(self) -> ExperimentConfig:
        if self.config_path is not None:
            cfg = load_config(self.config_path)
            if not self.overrides:
                return cfg
            base = cfg.model_dump()
        elif self.preset is not None:
            base = {"preset": self.preset}
        else:
            base = dict(self.config)
        return config_from_dict(merge_overrides(base, self.overrides))


class OfflineRequest(ConfigRef):
    pass


class OfflineResponse(_Model):
    offline_dir: str
    offline_seconds: float
    n_patches: int
    n_distinct: int
    local_dims_histogram: list[int]


class EstimateRequest(ConfigRef):
    kind: Optional[Literal["mc", "mc2", "sc"]] = None
    n_samples: Optional[int] = Field(default=None, ge=1)
    build_offline: bool = True
    calibrate_cost: bool = True


class EstimateResponse(_Model):
    outputs: dict[str, str]
    summary: dict[str, Any]
    cost: dict[str, Any]


class CompareRequest(ConfigRef):
    against: Literal["fine_fem", "msfem_direct", "stomsfem_interp", "stomsfem_rb"] = "fine_fem"
    n_samples: Optional[int] = Field(default=None, ge=1)
    build_offline: bool = True


class ErrorRow(_Model):
    method: str
    N: int
    error: float


class CompareResponse(_Model):
    outputs: dict[str, str]
    rows: list[ErrorRow]
    summary: dict[str, Any]


class ReportRequest(_Model):
    output_dir: Optional[str] = None
    config: Optional[ConfigRef] = None

    @model_validator(mode="after")
    def _one(self):
        if (self.output_dir is None) == (self.config is None):
            raise ValueError("give exactly one of output_dir or config")
        return self


class ReportResponse(_Model):
    report: dict[str, Any]


class PresetList(_Model):
    presets: list[str]
