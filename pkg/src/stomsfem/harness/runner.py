"""Experiment orchestration: offline stage, online estimators, comparisons and reports."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fem_core import DirichletBC
from ..mesh import Meshes, build_meshes
from ..msfem import MsFEM
from ..random_field import FieldModel, Uniform, Unsupported
from ..stochastic import (DirectMsFEMSolver, EstimatorReport, FineSolver, SurrogateSolver, draw_samples,
                          l2_norm, run_mc, run_sc, run_two_level_mc)
from ..surrogate import ArtifactError, SurrogateBank, build_offline
from . import io
from .config import ExperimentConfig, build_medium, build_source
from .cost import CostLedger, calibrate

log = logging.getLogger(__name__)

SURROGATE_METHODS = {"stomsfem_interp": "interp", "stomsfem_rb": "rb"}
KIND_ALIASES = {"mc": "mc", "mc2": "two_level_mc", "two_level_mc": "two_level_mc", "sc": "sc"}


@dataclass
class Setup:
    """Everything derived from a config that the stages share."""

    cfg: ExperimentConfig
    meshes: Meshes
    medium: object
    source: object
    solver: MsFEM
    bc_coarse: DirichletBC
    bc_fine: DirichletBC

    def sampler(self, rng):
        return self.medium.sample(rng, self.meshes.fine)

    @property
    def offline_dir(self) -> Path:
        method = SURROGATE_METHODS.get(self.cfg.method, "interp")
        return self.cfg.offline_path / method


def setup(cfg: ExperimentConfig) -> Setup:
    meshes = build_meshes(cfg.domain.build(), cfg.grid.build())
    medium = build_medium(cfg.medium)
    source = build_source(cfg.problem.source)
    solver = MsFEM(meshes, source, cfg.msfem.boundary_kind, cfg.msfem.formulation)
    return Setup(cfg, meshes, medium, source, solver, cfg.problem.boundary.build(meshes.coarse),
                 cfg.problem.boundary.build(meshes.fine))


@dataclass
class RunResult:
    report: EstimatorReport | None
    ledger: CostLedger
    outputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


# -- offline --------------------------------------------------------------------------


def offline(cfg: ExperimentConfig, su: Setup | None = None) -> tuple[SurrogateBank, Path]:
    """Build and save the surrogates for every patch."""
    su = su or setup(cfg)
    method = SURROGATE_METHODS.get(cfg.method)
    if method is None:
        raise ValueError(f"method {cfg.method!r} has no offline stage")
    bank = build_offline(su.meshes, su.medium, su.solver, method, cfg.surrogate.grid_kind(),
                         cfg.surrogate.rb_threshold, cfg.surrogate.rb_Q, cfg.workers)
    path = bank.save(su.offline_dir)
    dims = bank.local_dims()
    io.write_json(su.offline_dir / "offline.json", {
        "offline_seconds": bank.offline_seconds, "n_patches": len(su.meshes.patches),
        "n_distinct": len(bank.unique()), "local_dims_histogram": np.bincount(dims).tolist(),
        "grid_kind": bank.grid_kind.as_dict(), "method": method,
    })
    return bank, path


def load_bank(su: Setup) -> SurrogateBank:
    d = su.offline_dir
    if not (d / "manifest.json").exists():
        raise ArtifactError(f"no offline artifacts in {d}; run `stomsfem offline` with this config first")
    params = {p.patch_id: su.medium.local_param(su.meshes, p) for p in su.meshes.patches}
    return SurrogateBank.load(d, su.meshes, su.solver, params)


def ensure_bank(su: Setup, build_if_missing: bool = True) -> tuple[SurrogateBank, bool]:
    try:
        return load_bank(su), False
    except ArtifactError:
        if not build_if_missing:
            raise
    bank, _ = offline(su.cfg, su)
    return bank, True


# -- online ---------------------------------------------------------------------------


def sample_solver(su: Setup, method: str, bank: SurrogateBank | None = None, lookup: bool = False):
    if method == "fine_fem":
        return FineSolver(su.meshes, su.source, su.bc_fine)
    if method == "msfem_direct":
        return DirectMsFEMSolver(su.solver, su.bc_coarse)
    if method in SURROGATE_METHODS:
        if bank is None:
            raise ArtifactError("surrogate methods need offline artifacts")
        return SurrogateSolver(bank, su.bc_coarse, lookup=lookup)
    raise ValueError(f"unknown method {method!r}")


def _sc_lookup_ok(su: Setup, bank: SurrogateBank | None, rule: str, level: int) -> bool:
    gk = bank.grid_kind if bank is not None else None
    return (bank is not None and bank.method == "interp" and gk.kind == "sparse_clenshaw_curtis"
            and rule == "clenshaw_curtis" and level <= gk.level)


def _kappa_mean_fn(su: Setup):
    med = su.medium
    if isinstance(med, FieldModel):
        lo, hi = med.box
        mid = 0.5 * (lo + hi)
        return lambda g: med.field(g, mid)
    return lambda g: np.ones(g.n_cells)


def estimate(cfg: ExperimentConfig, kind: str | None = None, n_samples: int | None = None,
             build_offline_if_missing: bool = True, write: bool = True, calibrate_cost: bool = True) -> RunResult:
    """Online stage: run the configured estimator and write ``mean.csv``, ``std.csv`` and ``cost.json``."""
    su = setup(cfg)
    est = cfg.estimator
    kind = KIND_ALIASES[kind or est.kind]
    n = int(n_samples or est.n_samples)
    ledger = CostLedger()
    bank = None
    if cfg.method in SURROGATE_METHODS:
        t0 = time.perf_counter()
        bank, built = ensure_bank(su, build_offline_if_missing)
        ledger.add("offline", bank.offline_seconds)
        ledger.add("offline_load", time.perf_counter() - t0)
        ledger.counts["offline_built_now"] = int(built)
    if kind == "mc":
        solver = sample_solver(su, cfg.method, bank)
        rep = run_mc(n, su.sampler, solver, cfg.seed, workers=cfg.workers)
    elif kind == "two_level_mc":
        coarse = sample_solver(su, cfg.method, bank)
        fine = sample_solver(su, "fine_fem")
        rep = run_two_level_mc(n, est.n_fine, su.sampler, coarse, fine, cfg.seed, workers=cfg.workers)
        if "correction" in rep.timings:
            ledger.add("correction", rep.timings["correction"], est.n_fine)
    else:
        if not isinstance(su.medium, FieldModel) or not all(isinstance(d, Uniform) for d in su.medium.dists):
            raise Unsupported("collocation needs independent uniform parameters")
        lookup = _sc_lookup_ok(su, bank, est.rule, est.level)
        solver = sample_solver(su, cfg.method, bank, lookup=lookup)
        rep = run_sc(su.medium, solver, su.meshes.fine, est.level, est.rule)
        rep.extra["lookup"] = int(lookup)
    ledger.add("online", rep.timings["online"], rep.n_samples)
    ledger.add("online_per_sample", rep.timings["online_per_sample"])
    if calibrate_cost:
        calibrate(ledger, su.meshes.fine, _kappa_mean_fn(su), su.source)
    res = RunResult(rep, ledger, summary={"method": cfg.method, "estimator": kind, **rep.summary()})
    if write:
        out = Path(cfg.output_dir)
        res.outputs["mean"] = str(io.write_field(out / "mean.csv", su.meshes.coarse, rep.mean))
        res.outputs["std"] = str(io.write_field(out / "std.csv", su.meshes.coarse, rep.std))
        res.outputs["cost"] = str(io.write_json(out / "cost.json", {**ledger.as_dict(), "run": res.summary}))
    return res


def compare(cfg: ExperimentConfig, against: str = "fine_fem", n_samples: int | None = None,
            build_offline_if_missing: bool = True, write: bool = True) -> RunResult:
    """Error of the configured method against a reference method on shared samples.

    For every ``N`` in a doubling ladder up to ``n_samples`` the error is
    ``|M_N[u_method] - M_N[u_ref]|_inf / |M_N[u_ref]|_inf`` on the coarse nodes,
    i.e. the discretization error of the mean seen through ``N`` samples.
    """
    su = setup(cfg)
    n = int(n_samples or cfg.estimator.n_samples)
    ledger = CostLedger()
    bank = None
    if cfg.method in SURROGATE_METHODS or against in SURROGATE_METHODS:
        bank, _ = ensure_bank(su, build_offline_if_missing)
        ledger.add("offline", bank.offline_seconds)
    ss = draw_samples(su.sampler, cfg.seed, range(n), 0)
    outs = {}
    for m in (cfg.method, against):
        s = sample_solver(su, m, bank)
        t0 = time.perf_counter()
        outs[m] = s.solve_many(ss)
        ledger.add(f"{m}_per_sample", (time.perf_counter() - t0) / n)
    U, R = outs[cfg.method], outs[against]
    ladder = sorted({max(1, n >> k) for k in range(0, 8)})
    rows = []
    for N in ladder:
        ref = R[:N].mean(axis=0)
        err = np.max(np.abs(U[:N].mean(axis=0) - ref)) / max(np.max(np.abs(ref)), 1e-300)
        rows.append((cfg.method, N, err))
    path_err = np.max(np.abs(U - R), axis=1) / np.maximum(np.max(np.abs(R), axis=1), 1e-300)
    summary = {"method": cfg.method, "against": against, "n_samples": n,
               "pathwise_max_rel_linf": float(path_err.max()), "pathwise_mean_rel_linf": float(path_err.mean()),
               "mean_l2_error": l2_norm(su.meshes, U.mean(0) - R.mean(0))}
    res = RunResult(None, ledger, summary=summary)
    if write:
        out = Path(cfg.output_dir)
        res.outputs["errors"] = str(io.write_errors(out / "errors.csv", rows))
        res.outputs["compare"] = str(io.write_json(out / "compare.json", {**summary, "cost": ledger.as_dict()}))
    res.summary["rows"] = [list(r) for r in rows]
    return res


def report(output_dir) -> dict:
    """Summary of the artifacts found in an output directory."""
    d = Path(output_dir)
    if not d.exists():
        raise FileNotFoundError(f"no output directory {d}")
    out: dict = {"output_dir": str(d)}
    if (d / "mean.csv").exists():
        m = io.read_field(d / "mean.csv")
        out["mean"] = {"n_nodes": int(m.size), "max": float(m.max()), "min": float(m.min())}
    if (d / "std.csv").exists():
        s = io.read_field(d / "std.csv")
        out["std"] = {"max": float(s.max()), "mean": float(s.mean())}
    if (d / "errors.csv").exists():
        out["errors"] = [list(r) for r in io.read_errors(d / "errors.csv")]
    if (d / "cost.json").exists():
        c = io.read_json(d / "cost.json")
        out["cost"] = {k: c.get(k) for k in ("stages", "gamma", "R", "N_off", "mu")}
        out["run"] = c.get("run", {})
    if (d / "compare.json").exists():
        out["compare"] = {k: v for k, v in io.read_json(d / "compare.json").items() if k != "cost"}
    return out


def run(cfg: ExperimentConfig) -> RunResult:
    """Full pipeline: offline (when the method needs it and nothing is stored) then the estimator."""
    return estimate(cfg, build_offline_if_missing=True)
