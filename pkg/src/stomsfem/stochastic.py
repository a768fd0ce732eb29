"""Global stochastic drivers: Monte Carlo, two-level Monte Carlo and sparse-grid collocation.

A *sample solver* maps a list of medium samples to a ``(P, n)`` array of
quantities (typically coarse nodal values). Samples are drawn from per-index
seeds, so the estimates do not depend on batching or the number of workers.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import fem_core
from .fem_core import DirichletBC
from .mesh import Meshes
from .msfem import MsFEM
from .random_field import FieldSample, sample_rng
from .sparse_grids import sparse_grid
from .surrogate import SurrogateBank, from_unit

log = logging.getLogger(__name__)

MC_STREAM = 0
CORRECTION_STREAM = 1


class SampleSolver(Protocol):
    n_fallback: int

    def solve_many(self, samples: Sequence[FieldSample]) -> np.ndarray: ...


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str = "mc"  # mc | two_level_mc | sc
    n_samples: int = 100
    n_fine: int = 0
    seed: int = 0
    level: int = 3
    rule: str = "clenshaw_curtis"

    def __post_init__(self):
        if self.kind not in ("mc", "two_level_mc", "sc"):
            raise ValueError(f"unknown estimator {self.kind!r}")
        if self.n_samples < 1 or self.n_fine < 0 or self.level < 1:
            raise ValueError("sample counts must be >= 1 and levels >= 1")


@dataclass
class EstimatorReport:
    mean: np.ndarray
    variance: np.ndarray
    n_samples: int
    n_fallback: int = 0
    timings: dict = field(default_factory=dict)
    mse_terms: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.variance, 0.0))

    def summary(self) -> dict:
        return {"n_samples": self.n_samples, "n_fallback": self.n_fallback, "timings": self.timings,
                "mse_terms": self.mse_terms,
                **{k: v for k, v in self.extra.items() if isinstance(v, (int, float, str))}}


# -- sample solvers ------------------------------------------------------------------


class FunctionSolver:
    """Wraps ``f(sample) -> array``; handy for analytic toy problems."""

    def __init__(self, f: Callable[[FieldSample], np.ndarray]):
        self.f = f
        self.n_fallback = 0

    def solve_many(self, samples):
        return np.stack([np.atleast_1d(np.asarray(self.f(s), float)) for s in samples])


class FineSolver:
    """Standard FEM on the fine grid, reported at the coarse nodes."""

    def __init__(self, meshes: Meshes, source=1.0, bc: DirichletBC | None = None, method: str = "auto",
                 restrict: bool = True):
        self.meshes = meshes
        self.source = source
        self.bc = bc
        self.method = method
        self.restrict = restrict
        self.n_fallback = 0

    def solve_one(self, kappa: np.ndarray) -> np.ndarray:
        prob = fem_core.EllipticProblem(self.meshes.fine, kappa, self.source, self.bc)
        u = fem_core.solve(fem_core.assemble(prob), method=self.method)
        return self.meshes.restrict_to_coarse(u) if self.restrict else u

    def solve_many(self, samples):
        return np.stack([self.solve_one(s.kappa) for s in samples])


class DirectMsFEMSolver:
    """MsFEM with cell problems solved for every sample (no surrogate)."""

    def __init__(self, solver: MsFEM, bc: DirichletBC | None = None, local_params: dict | None = None):
        self.solver = solver
        self.bc = bc
        self.local_params = local_params
        self.n_fallback = 0

    def kappa_for(self, sample: FieldSample) -> list[np.ndarray]:
        patches = self.solver.meshes.patches
        if self.local_params is None:
            return [sample.kappa[p.fine_cells] for p in patches]
        # solve with the locally parametrized coefficient, as the surrogates see it
        return [self.local_params[p.patch_id].kappa(self.local_params[p.patch_id].extract(sample)) for p in patches]

    def solve_many(self, samples):
        out = []
        sym = self.solver.formulation == "galerkin"
        for s in samples:
            locs = [self.solver.local(p, k) for p, k in zip(self.solver.meshes.patches, self.kappa_for(s))]
            out.append(self.solver.assembler.solve(np.stack([l.S for l in locs]), np.stack([l.b for l in locs]),
                                                   self.bc, symmetric=sym))
        return np.stack(out)


class SurrogateSolver:
    """StoMsFEM online stage: local parameters -> surrogate -> coarse solve."""

    def __init__(self, bank: SurrogateBank, bc: DirichletBC | None = None, lookup: bool = False):
        self.bank = bank
        self.bc = bc
        self.lookup = lookup
        self.n_fallback = 0
        self.n_local = 0

    def local_parameters(self, samples) -> list[np.ndarray]:
        out = []
        for p in self.bank.meshes.patches:
            lp = self.bank.params[p.patch_id]
            out.append(np.stack([lp.extract(s) for s in samples]).reshape(len(samples), lp.dim))
        return out

    def solve_xis(self, xis: list[np.ndarray]) -> np.ndarray:
        if self.lookup:
            S_all, b_all = self.bank.lookup_batch(xis)
            nfb = 0
        else:
            S_all, b_all, nfb = self.bank.upscale_batch(xis)
        self.n_fallback += nfb
        self.n_local += S_all.shape[0] * S_all.shape[1]
        asm = self.bank.solver.assembler
        sym = self.bank.solver.formulation == "galerkin"
        return np.stack([asm.solve(S_all[p], b_all[p], self.bc, symmetric=sym) for p in range(S_all.shape[0])])

    def solve_many(self, samples):
        return self.solve_xis(self.local_parameters(samples))


# -- estimators -------------------------------------------------------------------


def _moments(U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = U.mean(axis=0)
    var = ((U - mean) ** 2).mean(axis=0)
    return mean, var


def draw_samples(sampler: Callable[[np.random.Generator], FieldSample], seed: int, indices, stream: int):
    return [sampler(sample_rng(seed, int(i), stream)) for i in indices]


def evaluate(sampler, solver: SampleSolver, seed: int, n: int, stream: int = MC_STREAM,
             batch: int = 64, workers: int = 1) -> np.ndarray:
    """Solutions for samples ``0..n-1`` of ``stream``, in index order."""
    chunks = [range(i, min(i + batch, n)) for i in range(0, n, batch)]

    def run(idx):
        return solver.solve_many(draw_samples(sampler, seed, idx, stream))

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, 0))


def run_mc(n_samples: int, sampler, solver: SampleSolver, seed: int = 0, batch: int = 64,
           workers: int = 1, keep_samples: bool = False) -> EstimatorReport:
    """Plain Monte Carlo: ensemble mean and (1/N) variance."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    fb0 = solver.n_fallback
    t0 = time.perf_counter()
    U = evaluate(sampler, solver, seed, n_samples, MC_STREAM, batch, workers)
    elapsed = time.perf_counter() - t0
    mean, var = _moments(U)
    rep = EstimatorReport(mean, var, n_samples, solver.n_fallback - fb0,
                          {"online": elapsed, "online_per_sample": elapsed / n_samples},
                          {"sampling": float(np.mean(var) / n_samples)})
    if keep_samples:
        rep.extra["samples"] = U
    return rep


def run_two_level_mc(n_coarse: int, n_fine: int, sampler, coarse: SampleSolver, fine: SampleSolver,
                     seed: int = 0, batch: int = 64, workers: int = 1) -> EstimatorReport:
    """``M[u_H] + M'[u_h - u_H]`` with independent sample streams for the two sums."""
    base = run_mc(n_coarse, sampler, coarse, seed, batch, workers)
    if n_fine == 0:
        return base
    t0 = time.perf_counter()
    samples_idx = range(n_fine)
    Uh, UH = [], []
    for i in range(0, n_fine, batch):
        ss = draw_samples(sampler, seed, samples_idx[i:i + batch], CORRECTION_STREAM)
        Uh.append(fine.solve_many(ss))
        UH.append(coarse.solve_many(ss))
    Uh, UH = np.concatenate(Uh), np.concatenate(UH)
    elapsed = time.perf_counter() - t0
    D = Uh - UH
    d_mean, d_var = _moments(D)
    _, h_var = _moments(Uh)
    mean = base.mean + d_mean
    rep = EstimatorReport(
        mean, base.variance, n_coarse, base.n_fallback + coarse.n_fallback,
        {**base.timings, "correction": elapsed},
        {"coarse_sampling": float(np.mean(base.variance) / n_coarse),
         "correction_sampling": float(np.mean(d_var) / n_fine)},
        {"coarse_mean": base.mean, "correction_mean": d_mean, "correction_variance": d_var,
         "fine_variance": h_var, "n_fine": n_fine},
    )
    return rep


def run_sc(model, solver: SampleSolver, grid_for_sample, level: int, rule: str = "clenshaw_curtis",
           batch: int = 256) -> EstimatorReport:
    """Sparse-grid collocation over the model's (uniform) global parameters.

    Variance is ``I[(u - I[u])^2]``; Smolyak weights can be negative, so it is
    clamped at zero.
    """
    lo, hi = model.box
    d = lo.size
    grid = sparse_grid(d, level, rule)
    nodes = from_unit(grid.points, lo, hi)
    t0 = time.perf_counter()
    parts = []
    for i in range(0, grid.size, batch):
        ss = [FieldSample(x, model.field(grid_for_sample, x), model.beta(grid_for_sample, x))
              for x in nodes[i:i + batch]]
        parts.append(solver.solve_many(ss))
    U = np.concatenate(parts)
    elapsed = time.perf_counter() - t0
    mean = grid.integrate(U)
    var = np.maximum(grid.integrate((U - mean) ** 2), 0.0)
    return EstimatorReport(mean, var, grid.size, solver.n_fallback,
                           {"online": elapsed, "online_per_sample": elapsed / grid.size},
                           extra={"level": level, "rule": rule, "weights_sum": float(grid.weights.sum())})


def balance_budget(H: float, beta: float, zeta: float | None = None, method: str = "mc") -> int:
    """Sample count balancing sampling and discretization error (unit constants).

    MC: ``N = H^-beta``; SC with convergence rate ``zeta``: ``N = H^(-beta/zeta)``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if method == "mc":
        return int(round(H ** (-beta)))
    if method == "sc":
        if not zeta or zeta <= 0:
            raise ValueError("SC needs a positive convergence rate zeta")
        return int(round(H ** (-beta / zeta)))
    raise ValueError(f"unknown method {method!r}")


def l2_norm(meshes_or_grid, values: np.ndarray) -> float:
    """Discrete L2 norm on the coarse nodes (trapezoidal weights)."""
    grid = meshes_or_grid.coarse if isinstance(meshes_or_grid, Meshes) else meshes_or_grid
    return float(np.sqrt(np.sum(grid.node_weights() * np.asarray(values) ** 2)))


def fit_rate(n: Sequence[float], err: Sequence[float]) -> tuple[float, float]:
    """Slope ``r`` of ``err ~ n^-r`` by least squares in log-log, and the R^2."""
    x, y = np.log(np.asarray(n, float)), np.log(np.asarray(err, float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return -float(coef[0]), r2
