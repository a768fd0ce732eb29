"""Multiscale finite elements: cell problems, local upscaling and the coarse solve.

For each coarse element the four multiscale basis functions solve
``-div(kappa grad phi) = 0`` on the (possibly oversampled) sample box with
boundary data that is nodal at the sample-box corners. The raw solutions
``psi`` are restricted to the element and recombined, ``phi = C psi`` with
``C = inv(psi(corners))``, so that ``phi`` is nodal at the element corners.

Local matrices are stored in (trial, test) order: ``S[l, l']`` is
``a(phi_l, v_l')`` where ``v`` is ``phi`` (Galerkin) or the bilinear shape
function (Petrov-Galerkin).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem_core
from .fem_core import DirichletBC, SparseSystem
from .mesh import CoarsePatch, Meshes, StructuredGrid

log = logging.getLogger(__name__)

BOUNDARY_KINDS = ("bilinear", "oscillatory")
FORMULATIONS = ("galerkin", "petrov_galerkin")


class MissingPatchError(KeyError):
    pass


def bilinear_shapes(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(4, n) bilinear shape values at reference coordinates, CCW from (0, 0)."""
    s, t = np.asarray(s, float), np.asarray(t, float)
    return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])


def harmonic_coordinate(kappa_edge: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Nodal solution of ``-(k p')' = 0`` with ``p = 0`` at the start and ``1`` at the end.

    ``kappa_edge`` has shape ``(..., n)`` (one value per edge segment);
    the result has ``n + 1`` nodal values along the last axis.
    """
    r = np.cumsum(h / np.asarray(kappa_edge, float), axis=-1)
    zero = np.zeros(r.shape[:-1] + (1,))
    return np.concatenate([zero, r / r[..., -1:]], axis=-1)


@dataclass(frozen=True)
class CellProblemSpec:
    patch: CoarsePatch
    boundary_kind: str = "bilinear"
    formulation: str = "petrov_galerkin"

    def __post_init__(self):
        if self.boundary_kind not in BOUNDARY_KINDS:
            raise ValueError(f"boundary_kind must be one of {BOUNDARY_KINDS}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")


@dataclass
class MultiscaleBasis:
    """Basis on one element: ``phi`` (4 x element nodes), nodal at the element corners.

    ``psi`` are the raw sample-box solutions and ``corner_values`` the matrix
    ``psi_j(corner_l')`` used for the recombination.
    """

    patch_id: tuple[int, int]
    phi: np.ndarray
    psi: np.ndarray
    corner_values: np.ndarray
    boundary_data: np.ndarray


@dataclass
class LocalUpscaled:
    S: np.ndarray
    b: np.ndarray


class CellGeometry:
    """Everything about a cell problem that depends only on the patch shape.

    Grids are in local coordinates with the sample box's lower-left corner at
    the origin, so patches with the same ``geometry_key`` share one instance.
    """

    def __init__(self, patch: CoarsePatch, hx: float, hy: float):
        nxs, nys = patch.sample_shape
        r = patch.refine
        self.key = patch.geometry_key
        self.sample = StructuredGrid(nxs, nys, 0.0, nxs * hx, 0.0, nys * hy)
        self.element = StructuredGrid(r, r, 0.0, r * hx, 0.0, r * hy)
        self.op = fem_core.grid_operator(self.sample)
        self.split = self.op.split(self.sample.boundary_mask)
        self.element_nodes = patch.element_nodes_local
        self.element_cells = patch.element_cells_local
        ei, ej = patch.element_offset
        corners_ij = [(ei, ej), (ei + r, ej), (ei + r, ej + r), (ei, ej + r)]
        self.corner_nodes = np.array([self.sample.node_index(i, j) for i, j in corners_ij])
        self.element_op = fem_core.grid_operator(self.element)
        en = self.element.nodes
        self.test_shapes = bilinear_shapes(en[:, 0] / self.element.x1, en[:, 1] / self.element.y1)

        # boundary node positions (i, j) and the edge segments they sit on
        fixed = self.split.fixed
        self._fi, self._fj = fixed % (nxs + 1), fixed // (nxs + 1)
        s = self._fi / nxs
        t = self._fj / nys
        self.bilinear_data = bilinear_shapes(s, t)

    @cached_property
    def _edge_cells(self) -> dict[str, np.ndarray]:
        nx, ny = self.sample.nx, self.sample.ny
        C = np.arange(nx * ny).reshape(ny, nx)
        return {"bottom": C[0, :], "top": C[-1, :], "left": C[:, 0], "right": C[:, -1]}

    def boundary_data(self, kappa: np.ndarray, kind: str) -> np.ndarray:
        """(4, n_fixed) Dirichlet data for the four corner problems."""
        if kind == "bilinear":
            return self.bilinear_data
        nx, ny = self.sample.nx, self.sample.ny
        ec = self._edge_cells
        sb = harmonic_coordinate(kappa[ec["bottom"]])
        st = harmonic_coordinate(kappa[ec["top"]])
        tl = harmonic_coordinate(kappa[ec["left"]])
        tr = harmonic_coordinate(kappa[ec["right"]])
        i, j = self._fi, self._fj
        s = i / nx
        t = j / ny
        s = np.where(j == 0, sb[i], np.where(j == ny, st[i], s))
        t = np.where(i == 0, tl[j], np.where(i == nx, tr[j], t))
        return bilinear_shapes(s, t)

    def cell_solutions(self, kappa: np.ndarray, kind: str = "bilinear") -> tuple[np.ndarray, np.ndarray]:
        """Raw solutions ``psi`` (4 x sample nodes) and their boundary data."""
        g = self.boundary_data(kappa, kind)
        free = self.split.solve_banded(kappa, np.zeros((self.split.free.size, 4)), g.T)
        psi = np.empty((4, self.sample.n_nodes))
        psi[:, self.split.free] = free.T
        psi[:, self.split.fixed] = g
        return psi, g

    def basis(self, kappa: np.ndarray, kind: str = "bilinear", patch_id=(0, 0)) -> MultiscaleBasis:
        psi, g = self.cell_solutions(kappa, kind)
        corner = psi[:, self.corner_nodes]
        C = np.linalg.inv(corner)
        phi = C @ psi[:, self.element_nodes]
        return MultiscaleBasis(patch_id, phi, psi, corner, g)

    def element_kappa(self, kappa_sample: np.ndarray) -> np.ndarray:
        return np.asarray(kappa_sample)[self.element_cells]

    def stiffness(self, phi: np.ndarray, kappa_sample: np.ndarray, formulation: str) -> np.ndarray:
        Ke = self.element_op.matrix(self.element_kappa(kappa_sample))
        test = phi if formulation == "galerkin" else self.test_shapes
        return phi @ (Ke @ test.T)


class MsFEM:
    """Direct (non-surrogate) multiscale solver over a coarse mesh."""

    def __init__(self, meshes: Meshes, source=1.0, boundary_kind: str = "bilinear",
                 formulation: str | None = None):
        if formulation is None:
            formulation = "petrov_galerkin" if meshes.spec.oversample_ratio > 1 else "galerkin"
        CellProblemSpec(meshes.patches[0], boundary_kind, formulation)  # validates names
        self.meshes = meshes
        self.source = source
        self.boundary_kind = boundary_kind
        self.formulation = formulation
        self._geoms: dict = {}
        self._pg_loads: dict = {}
        self.assembler = CoarseAssembler(meshes.coarse)

    def geometry(self, patch: CoarsePatch) -> CellGeometry:
        key = patch.geometry_key
        if key not in self._geoms:
            self._geoms[key] = CellGeometry(patch, self.meshes.fine.hx, self.meshes.fine.hy)
        return self._geoms[key]

    def element_load(self, patch: CoarsePatch) -> np.ndarray:
        """Midpoint load vector on the element's fine nodes (global coordinates)."""
        geom = self.geometry(patch)
        eb = patch.element_box
        grid = StructuredGrid(geom.element.nx, geom.element.ny, eb.x0, eb.x1, eb.y0, eb.y1)
        return fem_core.load_vector(grid, self.source)

    def pg_load(self, patch: CoarsePatch) -> np.ndarray:
        """Petrov-Galerkin load: independent of the medium, so computed once per patch."""
        if patch.patch_id not in self._pg_loads:
            self._pg_loads[patch.patch_id] = self.geometry(patch).test_shapes @ self.element_load(patch)
        return self._pg_loads[patch.patch_id]

    def solve_cell(self, patch: CoarsePatch, kappa_sample: np.ndarray) -> MultiscaleBasis:
        return self.geometry(patch).basis(kappa_sample, self.boundary_kind, patch.patch_id)

    def assemble_local(self, patch: CoarsePatch, basis: MultiscaleBasis, kappa_sample: np.ndarray) -> LocalUpscaled:
        geom = self.geometry(patch)
        S = geom.stiffness(basis.phi, kappa_sample, self.formulation)
        if self.formulation == "galerkin":
            b = basis.phi @ self.element_load(patch)
        else:
            b = self.pg_load(patch)
        return LocalUpscaled(S, b)

    def local(self, patch: CoarsePatch, kappa_sample: np.ndarray) -> LocalUpscaled:
        return self.assemble_local(patch, self.solve_cell(patch, kappa_sample), kappa_sample)

    def locals_for(self, kappa_fine: np.ndarray) -> list[LocalUpscaled]:
        return [self.local(p, kappa_fine[p.fine_cells]) for p in self.meshes.patches]

    def solve_sample(self, kappa_fine: np.ndarray, bc: DirichletBC | None = None,
                     return_bases: bool = False):
        """Coarse nodal solution for one fine-cell coefficient field."""
        bases, locs = [], []
        for p in self.meshes.patches:
            ks = kappa_fine[p.fine_cells]
            basis = self.solve_cell(p, ks)
            locs.append(self.assemble_local(p, basis, ks))
            bases.append(basis)
        U = self.assembler.solve(np.stack([l.S for l in locs]), np.stack([l.b for l in locs]), bc,
                                 symmetric=self.formulation == "galerkin")
        return (U, bases) if return_bases else U

    def reconstruct(self, U: np.ndarray, bases: list[MultiscaleBasis]) -> np.ndarray:
        """``u_H`` on fine nodes; values at nodes shared by elements are averaged."""
        fine = self.meshes.fine
        acc = np.zeros(fine.n_nodes)
        cnt = np.zeros(fine.n_nodes)
        for p, basis in zip(self.meshes.patches, bases):
            i0, _, j0, _ = p.cell_range
            ei, ej = p.element_offset
            r = p.refine
            gi, gj = np.meshgrid(np.arange(r + 1) + i0 + ei, np.arange(r + 1) + j0 + ej, indexing="xy")
            nodes = fine.node_index(gi, gj).ravel()
            acc[nodes] += U[list(p.corner_nodes)] @ basis.phi
            cnt[nodes] += 1
        return acc / cnt


class CoarseAssembler:
    """Scatter of per-element (trial, test) matrices into the coarse system.

    The CSR pattern is fixed, so a batch of local matrices maps to the data
    array through one sparse product.
    """

    def __init__(self, coarse: StructuredGrid):
        self.grid = coarse
        cn = coarse.cell_nodes
        M = coarse.n_cells
        n = coarse.n_nodes
        # entry (m, l, l') of S goes to row node(l') (test) and column node(l) (trial)
        rows = np.repeat(cn[:, None, :], 4, axis=1).ravel()
        cols = np.repeat(cn[:, :, None], 4, axis=2).ravel()
        keys = rows.astype(np.int64) * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self.P = sp.csr_matrix((np.ones(16 * M), (inv, np.arange(16 * M))), shape=(uniq.size, 16 * M))
        r_u = uniq // n
        self.indices = (uniq % n).astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r_u, minlength=n))])
        self._cn = cn

    def matrix(self, S_all: np.ndarray) -> sp.csr_matrix:
        n = self.grid.n_nodes
        if S_all.shape != (self.grid.n_cells, 4, 4):
            raise MissingPatchError(f"expected {self.grid.n_cells} local matrices, got {S_all.shape[0]}")
        data = self.P @ np.asarray(S_all, float).ravel()
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def load(self, b_all: np.ndarray) -> np.ndarray:
        F = np.zeros(self.grid.n_nodes)
        np.add.at(F, self._cn.ravel(), np.asarray(b_all, float).ravel())
        return F

    def system(self, S_all, b_all, bc: DirichletBC | None = None, symmetric: bool = True) -> SparseSystem:
        bc = bc if bc is not None else DirichletBC.homogeneous(self.grid)
        return fem_core.eliminate(self.matrix(S_all), self.load(b_all), bc, symmetric)

    def solve(self, S_all, b_all, bc: DirichletBC | None = None, symmetric: bool = True) -> np.ndarray:
        return fem_core.solve(self.system(S_all, b_all, bc, symmetric), method="direct")


def assemble_global(meshes: Meshes, locals_: list[LocalUpscaled], bc: DirichletBC | None = None,
                    symmetric: bool = True) -> SparseSystem:
    if len(locals_) != meshes.coarse.n_cells:
        raise MissingPatchError(f"need {meshes.coarse.n_cells} local matrices, got {len(locals_)}")
    asm = CoarseAssembler(meshes.coarse)
    return asm.system(np.stack([l.S for l in locals_]), np.stack([l.b for l in locals_]), bc, symmetric)
