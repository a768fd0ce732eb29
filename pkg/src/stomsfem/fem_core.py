"""Bilinear (Q1) finite elements for ``-div(kappa grad u) = b`` on structured grids.

The coefficient is piecewise constant per fine cell. Assembly goes through a
precomputed sparse scatter operator so that re-assembling for a new
coefficient is a single sparse mat-vec; this matters because the cell
problems are re-assembled thousands of times offline.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import StructuredGrid

log = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class CoefficientError(ValueError):
    pass


@lru_cache(maxsize=64)
def q1_element_stiffness(hx: float, hy: float) -> np.ndarray:
    """Exact Q1 stiffness of an ``hx x hy`` rectangle with unit coefficient.

    Local nodes are ordered counter-clockwise from the lower-left corner.
    """
    ax = np.array([[2, -2, -1, 1], [-2, 2, 1, -1], [-1, 1, 2, -2], [1, -1, -2, 2]], dtype=float)
    ay = np.array([[2, 1, -1, -2], [1, 2, -2, -1], [-1, -2, 2, 1], [-2, -1, 1, 2]], dtype=float)
    K = (hy / hx) * ax / 6.0 + (hx / hy) * ay / 6.0
    K.setflags(write=False)
    return K


def _as_cell_values(grid: StructuredGrid, f) -> np.ndarray:
    if callable(f):
        c = grid.cell_centers
        return np.broadcast_to(np.asarray(f(c[:, 0], c[:, 1]), dtype=float), (grid.n_cells,)).copy()
    if np.isscalar(f):
        return np.full(grid.n_cells, float(f))
    arr = np.asarray(f, dtype=float).ravel()
    if arr.size != grid.n_cells:
        raise ValueError(f"expected {grid.n_cells} cell values, got {arr.size}")
    return arr


def load_vector(grid: StructuredGrid, source) -> np.ndarray:
    """Midpoint-rule load: each cell gives ``area * b(center) / 4`` to its nodes."""
    bc = _as_cell_values(grid, source) * (grid.cell_area / 4.0)
    F = np.zeros(grid.n_nodes)
    np.add.at(F, grid.cell_nodes.ravel(), np.repeat(bc, 4))
    return F


class GridOperator:
    """Scatter operator from cell coefficients to the Q1 stiffness matrix of a grid.

    ``P @ kappa`` gives the CSR data array of the stiffness matrix, which lets
    the same pattern be reused across coefficients.
    """

    def __init__(self, grid: StructuredGrid):
        self.grid = grid
        n = grid.n_nodes
        Ke = q1_element_stiffness(grid.hx, grid.hy)
        cn = grid.cell_nodes
        rows = np.repeat(cn, 4, axis=1).ravel()
        cols = np.tile(cn, (1, 4)).ravel()
        cells = np.repeat(np.arange(grid.n_cells), 16)
        vals = np.tile(Ke.ravel(), grid.n_cells)
        keys = rows.astype(np.int64) * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self._rows, self._cols = (uniq // n).astype(np.int64), (uniq % n).astype(np.int64)
        self.P = sp.csr_matrix((vals, (inv, cells)), shape=(uniq.size, grid.n_cells))
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(self._rows, minlength=n))])
        self.indices = self._cols.copy()
        self._sub_cache: dict = {}

    def matrix(self, kappa) -> sp.csr_matrix:
        data = self.P @ _as_cell_values(self.grid, kappa)
        n = self.grid.n_nodes
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def split(self, fixed_mask: np.ndarray) -> "DirichletSplit":
        key = np.packbits(fixed_mask).tobytes()
        if key not in self._sub_cache:
            self._sub_cache[key] = DirichletSplit(self, fixed_mask)
        return self._sub_cache[key]


class DirichletSplit:
    """Free/fixed blocks ``A_II`` and ``A_IB`` of a grid operator."""

    def __init__(self, op: GridOperator, fixed_mask: np.ndarray):
        fixed_mask = np.asarray(fixed_mask, dtype=bool)
        self.op = op
        self.free = np.flatnonzero(~fixed_mask)
        self.fixed = np.flatnonzero(fixed_mask)
        n = op.grid.n_nodes
        pos = np.full(n, -1)
        pos[self.free] = np.arange(self.free.size)
        bpos = np.full(n, -1)
        bpos[self.fixed] = np.arange(self.fixed.size)
        r, c = op._rows, op._cols
        ii = (pos[r] >= 0) & (pos[c] >= 0)
        ib = (pos[r] >= 0) & (bpos[c] >= 0)
        self._P_II = op.P[np.flatnonzero(ii)]
        self._II = (pos[r[ii]], pos[c[ii]])
        self._P_IB = op.P[np.flatnonzero(ib)]
        self._IB = (pos[r[ib]], bpos[c[ib]])
        nf, nb = self.free.size, self.fixed.size
        self._II_csr = sp.csr_matrix((np.arange(ii.sum(), dtype=float), self._II), shape=(nf, nf))
        self._II_perm = self._II_csr.data.astype(np.int64)
        self._IB_csr = sp.csr_matrix((np.arange(ib.sum(), dtype=float), self._IB), shape=(nf, nb))
        self._IB_perm = self._IB_csr.data.astype(np.int64)
        # upper banded storage of A_II for banded Cholesky
        ri, ci = self._II
        up = ri <= ci
        self.bandwidth = int(np.max(ci[up] - ri[up])) if up.any() else 0
        u = self.bandwidth
        flat = (u + ri[up] - ci[up]) * nf + ci[up]
        self._P_band = sp.csr_matrix(
            (np.ones(int(up.sum())), (flat, np.flatnonzero(up))), shape=((u + 1) * nf, int(ii.sum()))
        ) @ self._P_II

    def blocks(self, kappa) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        k = _as_cell_values(self.op.grid, kappa)
        A_II = self._II_csr.copy()
        A_II.data = (self._P_II @ k)[self._II_perm]
        A_IB = self._IB_csr.copy()
        A_IB.data = (self._P_IB @ k)[self._IB_perm]
        return A_II, A_IB

    def banded(self, kappa) -> np.ndarray:
        k = _as_cell_values(self.op.grid, kappa)
        return (self._P_band @ k).reshape(self.bandwidth + 1, self.free.size)

    def coupling(self, kappa) -> sp.csr_matrix:
        A_IB = self._IB_csr.copy()
        A_IB.data = (self._P_IB @ _as_cell_values(self.op.grid, kappa))[self._IB_perm]
        return A_IB

    def solve_banded(self, kappa, rhs_free: np.ndarray, fixed_values: np.ndarray) -> np.ndarray:
        """Direct solve of the Dirichlet problem for one or several right-hand sides."""
        ab = self.banded(kappa)
        A_IB = self.coupling(kappa)
        rhs = np.asarray(rhs_free, dtype=float) - A_IB @ fixed_values
        try:
            cb = sla.cholesky_banded(ab, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"banded Cholesky failed: {exc}") from exc
        return sla.cho_solve_banded((cb, False), rhs, check_finite=False)


@lru_cache(maxsize=32)
def grid_operator(grid: StructuredGrid) -> GridOperator:
    return GridOperator(grid)


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed nodal values; every other node carries natural (Neumann) conditions."""

    nodes: np.ndarray
    values: np.ndarray

    @classmethod
    def homogeneous(cls, grid: StructuredGrid) -> "DirichletBC":
        nodes = np.flatnonzero(grid.boundary_mask)
        return cls(nodes, np.zeros(nodes.size))

    @classmethod
    def from_function(cls, grid: StructuredGrid, g: Callable) -> "DirichletBC":
        nodes = np.flatnonzero(grid.boundary_mask)
        xy = grid.nodes[nodes]
        return cls(nodes, np.broadcast_to(np.asarray(g(xy[:, 0], xy[:, 1]), float), (nodes.size,)).copy())

    @classmethod
    def on_edges(cls, grid: StructuredGrid, edges: Mapping[str, Callable | float]) -> "DirichletBC":
        """Dirichlet data on a subset of the edges ``left, right, bottom, top``."""
        N = grid.as_node_array(np.arange(grid.n_nodes))
        picks = {"left": N[:, 0], "right": N[:, -1], "bottom": N[0, :], "top": N[-1, :]}
        vals: dict[int, float] = {}
        for name, g in edges.items():
            idx = picks[name]
            xy = grid.nodes[idx]
            v = g(xy[:, 0], xy[:, 1]) if callable(g) else np.full(idx.size, float(g))
            vals.update(zip(idx.tolist(), np.broadcast_to(v, idx.shape).tolist()))
        nodes = np.array(sorted(vals), dtype=np.int64)
        return cls(nodes, np.array([vals[n] for n in nodes.tolist()]))

    @classmethod
    def on_lines(cls, grid: StructuredGrid, axis: str, coords, g: Callable) -> "DirichletBC":
        """Dirichlet data on grid lines ``x = c`` (axis ``"x"``) or ``y = c``."""
        N = grid.as_node_array(np.arange(grid.n_nodes))
        nodes = []
        for c in coords:
            if axis == "x":
                i = int(round((c - grid.x0) / grid.hx))
                if abs(grid.x0 + i * grid.hx - c) > 1e-9 * max(1.0, abs(c)):
                    raise ValueError(f"x = {c} is not a grid line")
                nodes.append(N[:, i])
            else:
                j = int(round((c - grid.y0) / grid.hy))
                if abs(grid.y0 + j * grid.hy - c) > 1e-9 * max(1.0, abs(c)):
                    raise ValueError(f"y = {c} is not a grid line")
                nodes.append(N[j, :])
        nodes = np.unique(np.concatenate(nodes))
        xy = grid.nodes[nodes]
        return cls(nodes, np.asarray(g(xy[:, 0], xy[:, 1]), float).reshape(-1))

    def mask(self, n_nodes: int) -> np.ndarray:
        m = np.zeros(n_nodes, dtype=bool)
        m[self.nodes] = True
        return m


@dataclass
class EllipticProblem:
    grid: StructuredGrid
    kappa: np.ndarray
    source: Callable | float | np.ndarray = 0.0
    bc: DirichletBC | None = None

    def __post_init__(self):
        self.kappa = _as_cell_values(self.grid, self.kappa)
        if not np.all(self.kappa > 0):
            raise CoefficientError(f"kappa must be positive on every cell (min {self.kappa.min():.3e})")
        if self.bc is None:
            self.bc = DirichletBC.homogeneous(self.grid)


@dataclass
class SparseSystem:
    """Dirichlet-eliminated linear system ``A u_free = rhs``."""

    A: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_total: int
    symmetric: bool = True

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n_total)
        u[self.free] = u_free
        u[self.fixed] = self.fixed_values
        return u


def assemble(problem: EllipticProblem) -> SparseSystem:
    grid = problem.grid
    op = grid_operator(grid)
    split = op.split(problem.bc.mask(grid.n_nodes))
    A_II, A_IB = split.blocks(problem.kappa)
    F = load_vector(grid, problem.source)
    g = np.zeros(split.fixed.size)
    pos = np.searchsorted(split.fixed, problem.bc.nodes)
    g[pos] = problem.bc.values
    rhs = F[split.free] - A_IB @ g
    return SparseSystem(A_II, rhs, split.free, split.fixed, g, grid.n_nodes)


def eliminate(A: sp.spmatrix, F: np.ndarray, bc: DirichletBC, symmetric: bool = True) -> SparseSystem:
    """Dirichlet elimination for an already assembled full matrix."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    mask = bc.mask(n)
    free, fixed = np.flatnonzero(~mask), np.flatnonzero(mask)
    g = np.zeros(fixed.size)
    g[np.searchsorted(fixed, bc.nodes)] = bc.values
    A_II = A[free][:, free].tocsr()
    rhs = F[free] - A[free][:, fixed] @ g
    return SparseSystem(A_II, rhs, free, fixed, g, n, symmetric)


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return r / nb if nb > 0 else r


def backward_error(A, x, b) -> float:
    """Normwise backward error ``|b - Ax| / (|A| |x| + |b|)`` in the 2-norm (|A| via the 1-norm bound)."""
    nA = spla.norm(A, 1)
    den = nA * np.linalg.norm(x) + np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return r / den if den > 0 else r


def _amg_preconditioner(A):
    import pyamg

    return pyamg.smoothed_aggregation_solver(A, symmetry="symmetric").aspreconditioner(cycle="V")


def solve(system: SparseSystem, method: str = "auto", preconditioner: str = "amg",
          rtol: float = RESIDUAL_RTOL, maxiter: int = 5000) -> np.ndarray:
    """Solve the eliminated system and return the solution on all nodes.

    ``method`` is ``"direct"`` (sparse LU), ``"cg"`` (preconditioned conjugate
    gradients, SPD systems only) or ``"auto"``.
    """
    A, b = system.A, system.rhs
    n = A.shape[0]
    if n == 0:
        return system.expand(np.zeros(0))
    if method == "auto":
        method = "direct" if (n <= 20000 or not system.symmetric) else "cg"
    if method == "direct":
        lu = spla.splu(A.tocsc())
        x = lu.solve(b)
        # high-contrast systems can miss the tolerance by a hair; refine a few times
        for _ in range(3):
            if relative_residual(A, x, b) <= rtol:
                break
            x = x + lu.solve(b - A @ x)
    elif method == "cg":
        if not system.symmetric:
            raise ValueError("conjugate gradients needs a symmetric system")
        if preconditioner == "amg":
            M = _amg_preconditioner(A)
        elif preconditioner == "jacobi":
            M = sp.diags(1.0 / A.diagonal())
        elif preconditioner == "ilu":
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
            M = spla.LinearOperator(A.shape, ilu.solve)
        else:
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
        x, info = spla.cg(A, b, rtol=rtol * 0.1, atol=0.0, maxiter=maxiter, M=M)
        # the recursive residual drifts from the true one; restart from the iterate
        for _ in range(3):
            if info > 0 or relative_residual(A, x, b) <= rtol:
                break
            x, info = spla.cg(A, b, x0=x, rtol=rtol * 0.1, atol=0.0, maxiter=maxiter, M=M)
        if info > 0:
            raise SolverError(f"CG did not converge in {maxiter} iterations", relative_residual(A, x, b))
    else:
        raise ValueError(f"unknown method {method!r}")
    res = relative_residual(A, x, b)
    if method == "direct" and not res <= rtol:
        # LU is backward stable; at high contrast ||b|| underestimates the round-off floor
        res = min(res, backward_error(A, x, b))
    if not res <= rtol:
        raise SolverError("solution does not meet the residual tolerance", res)
    return system.expand(x)


def solve_problem(problem: EllipticProblem, **kw) -> np.ndarray:
    return solve(assemble(problem), **kw)


def energy(grid: StructuredGrid, kappa, u: np.ndarray, v: np.ndarray | None = None) -> float:
    """``int kappa grad u . grad v`` for nodal fields on ``grid``."""
    A = grid_operator(grid).matrix(kappa)
    v = u if v is None else v
    return float(u @ (A @ v))


def write_nodal_csv(path, grid: StructuredGrid, values: np.ndarray, name: str = "value") -> None:
    values = np.asarray(values).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", name])
        for (x, y), v in zip(grid.nodes, values):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def write_cell_csv(path, grid: StructuredGrid, values: np.ndarray, name: str = "value") -> None:
    values = np.asarray(values).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", name])
        for (x, y), v in zip(grid.cell_centers, values):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def read_nodal_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return np.array([[float(a) for a in row] for row in r])


def l2_error(grid: StructuredGrid, u: np.ndarray, exact: Callable, order: int = 3) -> float:
    """Continuous L2 norm of ``u_h - exact`` with Gauss quadrature on every cell."""
    g, w = np.polynomial.legendre.leggauss(order)
    s, t = np.meshgrid((g + 1) / 2, (g + 1) / 2, indexing="xy")
    s, t = s.ravel(), t.ravel()
    wq = np.outer(w, w).ravel() / 4.0
    N = np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=1)
    uc = np.asarray(u)[grid.cell_nodes] @ N.T
    x0 = grid.nodes[grid.cell_nodes[:, 0]]
    xq = x0[:, 0:1] + s[None, :] * grid.hx
    yq = x0[:, 1:2] + t[None, :] * grid.hy
    err = (uc - exact(xq, yq)) ** 2
    return float(np.sqrt(grid.cell_area * np.sum(err * wq[None, :])))
