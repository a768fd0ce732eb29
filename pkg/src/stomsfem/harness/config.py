"""Experiment configuration: pydantic models, YAML loading and medium construction."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..fem_core import DirichletBC
from ..mesh import Box, Domain2D, GridSpec, StructuredGrid
from ..random_field import (ExpShift, FieldModel, Gaussian, GaussianKernel, GaussianKLField, Uniform,
                            constant_mode, indicator_mode, make_transform)
from ..sparse_grids import GridKind

METHODS = ("fine_fem", "msfem_direct", "stomsfem_interp", "stomsfem_rb")


class ConfigError(ValueError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Model):
    x_range: tuple[float, float] = (0.0, 1.0)
    y_range: tuple[float, float] = (0.0, 1.0)

    def build(self) -> Domain2D:
        return Domain2D(tuple(self.x_range), tuple(self.y_range))


class GridConfig(_Model):
    coarse_nx: int = Field(gt=0)
    coarse_ny: int = Field(gt=0)
    refine: int = Field(gt=0)
    oversample_ratio: float = Field(default=1.0, ge=1.0)

    def build(self) -> GridSpec:
        return GridSpec(self.coarse_nx, self.coarse_ny, self.refine, self.oversample_ratio)


class MediumConfig(_Model):
    """Random medium. ``kind`` selects an affine mode expansion or a Gaussian KL field.

    Affine media come either from a bundled geometry file (``geometry``) or
    from explicit ``mean`` and ``modes`` entries.
    """

    kind: Literal["affine", "gaussian_kl"] = "affine"
    geometry: Optional[str] = None
    n_channels: Optional[int] = Field(default=None, ge=0)
    mean: dict[str, Any] = Field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    modes: list[dict[str, Any]] = Field(default_factory=list)
    transform: Union[str, dict[str, Any]] = "identity"
    kernel: Optional[dict[str, float]] = None
    local_keep_fraction: float = Field(default=0.99, gt=0, le=1)
    sampler_keep_fraction: float = Field(default=0.999, gt=0, le=1)
    truncation: float = Field(default=3.0, gt=0)


class MsfemConfig(_Model):
    boundary_kind: Literal["bilinear", "oscillatory"] = "bilinear"
    formulation: Optional[Literal["galerkin", "petrov_galerkin"]] = None


class SurrogateConfig(_Model):
    kind: Literal["tensor_chebyshev", "sparse_clenshaw_curtis", "sparse_trapezoidal"] = "tensor_chebyshev"
    nodes_per_dim: int = Field(default=9, ge=1)
    level: int = Field(default=4, ge=1)
    rb_threshold: Optional[float] = Field(default=None, gt=0)
    rb_Q: Optional[int] = Field(default=None, ge=0)

    def grid_kind(self) -> GridKind:
        return GridKind(self.kind, self.nodes_per_dim, self.level)


class BoundaryConfig(_Model):
    """``dirichlet``: data on all of the boundary. ``lines``: data on two interior
    grid lines with natural conditions elsewhere."""

    kind: Literal["dirichlet", "lines"] = "dirichlet"
    value: float = 0.0
    axis: Literal["x", "y"] = "x"
    coords: list[float] = Field(default_factory=lambda: [0.1, 0.9])
    g: dict[str, Any] = Field(default_factory=lambda: {"kind": "square_wave", "periods": 4})

    def build(self, grid: StructuredGrid) -> DirichletBC:
        if self.kind == "dirichlet":
            return DirichletBC.from_function(grid, lambda x, y: np.full(np.shape(x), self.value))
        g = make_profile(self.g)
        along = (lambda x, y: g(y)) if self.axis == "x" else (lambda x, y: g(x))
        return DirichletBC.on_lines(grid, self.axis, self.coords, along)


class ProblemConfig(_Model):
    source: Union[float, dict[str, Any]] = 1.0
    boundary: BoundaryConfig = Field(default_factory=BoundaryConfig)


class EstimatorConfig(_Model):
    kind: Literal["mc", "mc2", "sc"] = "mc"
    n_samples: int = Field(default=100, ge=1)
    n_fine: int = Field(default=0, ge=0)
    level: int = Field(default=3, ge=1)
    rule: Literal["clenshaw_curtis", "trapezoidal"] = "clenshaw_curtis"


class ExperimentConfig(_Model):
    name: str = "custom"
    preset: Optional[str] = None
    domain: DomainConfig = Field(default_factory=DomainConfig)
    grid: GridConfig
    medium: MediumConfig = Field(default_factory=MediumConfig)
    msfem: MsfemConfig = Field(default_factory=MsfemConfig)
    surrogate: SurrogateConfig = Field(default_factory=SurrogateConfig)
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    method: Literal["fine_fem", "msfem_direct", "stomsfem_interp", "stomsfem_rb"] = "stomsfem_interp"
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    seed: int = 0
    workers: int = Field(default=1, ge=1)
    output_dir: str = "results"
    offline_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        try:
            self.grid.build()
            self.domain.build()
        except ValueError as exc:
            raise ValueError(str(exc)) from exc
        if self.method == "stomsfem_rb" and self.medium.kind != "affine":
            raise ValueError("stomsfem_rb needs an affine medium")
        return self

    @property
    def offline_path(self) -> Path:
        return Path(self.offline_dir) if self.offline_dir else Path(self.output_dir) / "offline"


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) config. A ``preset`` key starts from that preset and
    applies the remaining keys as nested overrides."""
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    from .presets import PRESETS

    data = dict(data)
    preset = data.get("preset")
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = PRESETS[preset]().model_dump()
        data = merge_overrides(base, data)
    try:
        return ExperimentConfig.model_validate(data)
    except Exception as exc:
        raise ConfigError(str(exc)) from exc


def merge_overrides(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_overrides(out[k], v)
        else:
            out[k] = v
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(json.loads(cfg.model_dump_json()), sort_keys=False)


# -- builders ---------------------------------------------------------------------


def make_distribution(spec: dict):
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return Uniform(float(spec.get("a", 0.0)), float(spec.get("b", 1.0)))
    if kind == "gaussian":
        return Gaussian(float(spec.get("mean", 0.0)), float(spec.get("std", 1.0)), float(spec.get("truncation", 3.0)))
    raise ConfigError(f"unknown distribution {kind!r}")


def make_field_function(spec):
    """Scalar field ``f(x, y)`` from a small declarative spec."""
    if isinstance(spec, (int, float)):
        v = float(spec)
        return lambda x, y: np.full(np.shape(x), v)
    kind = spec.get("kind", "constant")
    if kind == "constant":
        v = float(spec.get("value", 1.0))
        return lambda x, y: np.full(np.shape(x), v)
    if kind == "sine_product":
        a, b = float(spec.get("a", 0.0)), float(spec.get("b", 1.0))
        kx, ky = float(spec.get("kx", 1.0)), float(spec.get("ky", 1.0))
        return lambda x, y: a + b * np.sin(kx * np.pi * x) * np.sin(ky * np.pi * y)
    if kind == "bilinear_product":
        a, b = float(spec.get("a", 0.0)), float(spec.get("b", 1.0))
        return lambda x, y: a + b * x * y
    raise ConfigError(f"unknown field function {kind!r}")


def make_profile(spec: dict):
    """Boundary profile ``g(s)``; the square wave alternates between 0 and 1."""
    kind = spec.get("kind", "square_wave")
    if kind == "square_wave":
        periods = float(spec.get("periods", 4))
        lo, hi = float(spec.get("low", 0.0)), float(spec.get("high", 1.0))
        return lambda s: np.where(np.floor(2 * periods * np.asarray(s) + 1e-9) % 2 == 0, hi, lo)
    if kind == "constant":
        v = float(spec.get("value", 0.0))
        return lambda s: np.full(np.shape(s), v)
    if kind == "linear":
        return lambda s: np.asarray(s, float)
    raise ConfigError(f"unknown profile {kind!r}")


def read_geometry(name: str) -> dict:
    p = Path(name)
    if p.exists():
        return json.loads(p.read_text())
    fname = name if name.endswith(".json") else f"{name}.json"
    return json.loads(resources.files("stomsfem.data").joinpath(fname).read_text())


def _background_with_inclusions(bg, inclusions):
    boxes = [(Box(*inc["box"]), float(inc.get("value", 1.0))) for inc in inclusions]

    def f(x, y):
        v = np.asarray(bg(x, y), float).copy()
        for b, val in boxes:
            inside = (x >= b.x0) & (x <= b.x1) & (y >= b.y0) & (y <= b.y1)
            v = np.where(inside, val, v)
        return v

    return f


def build_medium(mc: MediumConfig):
    """Construct the random medium described by a config section."""
    if mc.kind == "gaussian_kl":
        k = mc.kernel or {"l1": 1.0, "l2": 1.0 / 64}
        kernel = GaussianKernel(float(k["l1"]), float(k["l2"]), float(k.get("variance", 1.0)))
        transform = make_transform(mc.transform) if mc.transform != "identity" else ExpShift(0.1)
        return GaussianKLField(kernel, transform, mc.local_keep_fraction, mc.sampler_keep_fraction,
                               mc.truncation)
    transform = make_transform(mc.transform)
    if mc.geometry:
        geo = read_geometry(mc.geometry)
        bg = make_field_function(geo["background"])
        if "channels" in geo:
            mean = _background_with_inclusions(bg, geo.get("inclusions", []))
            chans = geo["channels"][: mc.n_channels] if mc.n_channels is not None else geo["channels"]
            modes = [constant_mode(1.0, geo["global_mode"]["name"])]
            dists = [make_distribution(geo["global_mode"]["distribution"])]
            for c in chans:
                modes.append(indicator_mode(Box(*c["box"]), 1.0, c["name"]))
                dists.append(make_distribution(geo["channel_distribution"]))
        else:
            mean = bg
            mlist = geo["modes"][: mc.n_channels] if mc.n_channels is not None else geo["modes"]
            modes = [indicator_mode(Box(*m["box"]), 1.0, m["name"]) for m in mlist]
            dists = [make_distribution(geo["distribution"]) for _ in mlist]
        return FieldModel(mean, modes, dists, transform, name=mc.geometry)
    mean = make_field_function(mc.mean)
    modes, dists = [], []
    for k, m in enumerate(mc.modes):
        if m.get("kind", "indicator") == "indicator":
            modes.append(indicator_mode(Box(*m["box"]), float(m.get("value", 1.0)), m.get("name", f"mode_{k}")))
        elif m["kind"] == "constant":
            modes.append(constant_mode(float(m.get("value", 1.0)), m.get("name", f"mode_{k}")))
        else:
            raise ConfigError(f"unknown mode kind {m['kind']!r}")
        dists.append(make_distribution(m.get("distribution", {"kind": "uniform"})))
    return FieldModel(mean, modes, dists, transform)


def build_source(spec):
    return make_field_function(spec)
