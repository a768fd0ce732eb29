"""Cost accounting in units of one fine-grid solve ``mu``.

``Cost_StoMsFEM / mu = N_off + R * N_on`` with ``N_off`` the offline time and
``R`` the per-sample online time, both divided by ``mu``. The fine-solve
exponent ``gamma`` comes from a log-log fit of solve time against ``1/h``
over three fine meshes (``time ~ (1/h)^(gamma d)`` with ``d = 2``).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import fem_core
from ..mesh import StructuredGrid


@dataclass
class CostLedger:
    stages: dict = field(default_factory=dict)  # stage -> seconds
    counts: dict = field(default_factory=dict)  # stage -> operation counts
    mu: float | None = None
    gamma: float | None = None
    gamma_points: list = field(default_factory=list)

    def add(self, stage: str, seconds: float, count: int | None = None) -> None:
        self.stages[stage] = self.stages.get(stage, 0.0) + float(seconds)
        if count is not None:
            self.counts[stage] = self.counts.get(stage, 0) + int(count)

    def timed(self, stage: str, count: int | None = None):
        ledger = self

        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()
                return self

            def __exit__(self, *exc):
                ledger.add(stage, time.perf_counter() - self.t0, count)
                return False

        return _T()

    @property
    def n_off(self) -> float | None:
        if self.mu is None or "offline" not in self.stages:
            return None
        return self.stages["offline"] / self.mu

    @property
    def R(self) -> float | None:
        if self.mu is None or "online_per_sample" not in self.stages:
            return None
        return self.stages["online_per_sample"] / self.mu

    def total_over_mu(self, n_on: int) -> float | None:
        if self.n_off is None or self.R is None:
            return None
        return self.n_off + self.R * n_on

    def as_dict(self) -> dict:
        return {"stages": self.stages, "counts": self.counts, "mu": self.mu, "gamma": self.gamma,
                "gamma_points": self.gamma_points, "N_off": self.n_off, "R": self.R}

    @classmethod
    def from_dict(cls, d: dict) -> "CostLedger":
        return cls(dict(d.get("stages", {})), dict(d.get("counts", {})), d.get("mu"), d.get("gamma"),
                   list(d.get("gamma_points", [])))


def time_fine_solve(grid: StructuredGrid, kappa, source=1.0, repeats: int = 1) -> float:
    """Best-of-``repeats`` wall time of one assemble-and-solve on ``grid``."""
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fem_core.solve(fem_core.assemble(fem_core.EllipticProblem(grid, kappa, source)))
        best = min(best, time.perf_counter() - t0)
    return float(best)


def fit_gamma(inv_h, seconds, d: int = 2) -> float:
    """``gamma`` from ``seconds ~ inv_h^(gamma d)``."""
    slope = np.polyfit(np.log(np.asarray(inv_h, float)), np.log(np.asarray(seconds, float)), 1)[0]
    return float(slope / d)


def calibrate(ledger: CostLedger, fine: StructuredGrid, kappa_fn, source=1.0, repeats: int = 2) -> CostLedger:
    """Measure ``mu`` on ``fine`` and fit ``gamma`` over ``fine`` and two coarser copies."""
    pts = []
    for div in (4, 2, 1):
        if fine.nx % div or fine.ny % div:
            continue
        g = StructuredGrid(fine.nx // div, fine.ny // div, fine.x0, fine.x1, fine.y0, fine.y1)
        t = time_fine_solve(g, kappa_fn(g), source, repeats)
        pts.append((g.nx / (fine.x1 - fine.x0), t))
    ledger.mu = pts[-1][1]
    ledger.gamma_points = [[float(a), float(b)] for a, b in pts]
    if len(pts) >= 3:
        ledger.gamma = fit_gamma([p[0] for p in pts], [p[1] for p in pts])
    return ledger
