"""Structured quadrilateral meshes, coarse patches and oversampling geometry.

Node numbering is row-major with x running fastest: node ``(i, j)`` of a grid
with ``nx`` cells along x has index ``j * (nx + 1) + i``. Cells follow the same
convention with ``nx`` in place of ``nx + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def contains(self, other: "Box", tol: float = 1e-12) -> bool:
        return (self.x0 <= other.x0 + tol and other.x1 <= self.x1 + tol
                and self.y0 <= other.y0 + tol and other.y1 <= self.y1 + tol)

    def overlaps(self, other: "Box") -> bool:
        # positive-area intersection; touching edges do not count
        return (min(self.x1, other.x1) > max(self.x0, other.x0)
                and min(self.y1, other.y1) > max(self.y0, other.y0))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.x1, self.y0, self.y1)


@dataclass(frozen=True)
class Domain2D:
    x_range: tuple[float, float] = (0.0, 1.0)
    y_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise MeshError(f"degenerate domain {self.x_range} x {self.y_range}")

    @property
    def box(self) -> Box:
        return Box(self.x_range[0], self.x_range[1], self.y_range[0], self.y_range[1])


@dataclass(frozen=True)
class GridSpec:
    """Coarse element counts, fine cells per coarse cell and oversampling ratio."""

    coarse_nx: int
    coarse_ny: int
    refine: int
    oversample_ratio: float = 1.0

    def __post_init__(self):
        for name in ("coarse_nx", "coarse_ny", "refine"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise MeshError(f"{name} must be a positive integer, got {v!r}")
        if self.oversample_ratio < 1.0:
            raise MeshError(f"oversample_ratio must be >= 1, got {self.oversample_ratio}")
        halo = self.halo_cells_exact
        if abs(halo - round(halo)) > 1e-9:
            raise MeshError(
                f"oversampling halo (eta-1)*refine/2 = {halo} is not a whole number of fine cells")

    @property
    def halo_cells_exact(self) -> float:
        return (self.oversample_ratio - 1.0) * self.refine / 2.0

    @property
    def halo_cells(self) -> int:
        return int(round(self.halo_cells_exact))

    @property
    def n_elements(self) -> int:
        return self.coarse_nx * self.coarse_ny


@dataclass(frozen=True)
class StructuredGrid:
    """Tensor-product grid of ``nx * ny`` rectangular cells."""

    nx: int
    ny: int
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @cached_property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx + 1)

    @cached_property
    def y_nodes(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, self.ny + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x_nodes, self.y_nodes, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_centers(self) -> np.ndarray:
        xc = self.x0 + (np.arange(self.nx) + 0.5) * self.hx
        yc = self.y0 + (np.arange(self.ny) + 0.5) * self.hy
        X, Y = np.meshgrid(xc, yc, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 4) node indices of each cell, counter-clockwise from lower left."""
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        n0 = (j * (self.nx + 1) + i).ravel()
        return np.column_stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1])

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros((self.ny + 1, self.nx + 1), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m.ravel()

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def as_node_array(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.ny + 1, self.nx + 1)

    def as_cell_array(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.ny, self.nx)

    def node_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights on the nodes."""
        wx = np.full(self.nx + 1, self.hx)
        wx[[0, -1]] *= 0.5
        wy = np.full(self.ny + 1, self.hy)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx).ravel()


@dataclass(frozen=True)
class CoarsePatch:
    """One coarse element with its oversampled neighbourhood.

    ``cell_range`` is ``(i0, i1, j0, j1)`` in global fine cell indices (half-open)
    and ``element_offset`` locates the element's lower-left fine cell inside the
    sample box.
    """

    patch_id: tuple[int, int]
    element_box: Box
    sample_box: Box
    cell_range: tuple[int, int, int, int]
    element_offset: tuple[int, int]
    refine: int
    corner_nodes: tuple[int, int, int, int]
    fine_nx: int = field(repr=False, default=0)
    active_params: tuple[int, ...] = ()

    @property
    def sample_shape(self) -> tuple[int, int]:
        """(nx, ny) fine cells of the sample box."""
        i0, i1, j0, j1 = self.cell_range
        return i1 - i0, j1 - j0

    @property
    def geometry_key(self) -> tuple:
        """Translation-invariant description of the local cell problem."""
        return (self.sample_shape, self.element_offset, self.refine)

    @property
    def fine_cells(self) -> np.ndarray:
        """Global fine cell indices of the sample box, row-major."""
        i0, i1, j0, j1 = self.cell_range
        i, j = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="xy")
        return (j * self.fine_nx + i).ravel()

    @property
    def fine_nodes(self) -> np.ndarray:
        """Global fine node indices of the sample box, row-major."""
        i0, i1, j0, j1 = self.cell_range
        i, j = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="xy")
        return (j * (self.fine_nx + 1) + i).ravel()

    @property
    def element_cells_local(self) -> np.ndarray:
        """Indices of the element's cells within the sample box cell array."""
        nxs, _ = self.sample_shape
        ei, ej = self.element_offset
        i, j = np.meshgrid(np.arange(ei, ei + self.refine), np.arange(ej, ej + self.refine), indexing="xy")
        return (j * nxs + i).ravel()

    @property
    def element_nodes_local(self) -> np.ndarray:
        nxs, _ = self.sample_shape
        ei, ej = self.element_offset
        r = self.refine
        i, j = np.meshgrid(np.arange(ei, ei + r + 1), np.arange(ej, ej + r + 1), indexing="xy")
        return (j * (nxs + 1) + i).ravel()


@dataclass(frozen=True)
class Meshes:
    domain: Domain2D
    spec: GridSpec
    coarse: StructuredGrid
    fine: StructuredGrid
    patches: tuple[CoarsePatch, ...]

    def patch(self, i: int, j: int) -> CoarsePatch:
        return self.patches[j * self.spec.coarse_nx + i]

    @cached_property
    def coarse_node_to_fine(self) -> np.ndarray:
        """Fine node index of every coarse node (nested refinement)."""
        r = self.spec.refine
        i, j = np.meshgrid(np.arange(self.coarse.nx + 1) * r, np.arange(self.coarse.ny + 1) * r,
                           indexing="xy")
        return self.fine.node_index(i, j).ravel()

    def restrict_to_coarse(self, fine_values: np.ndarray) -> np.ndarray:
        return np.asarray(fine_values)[..., self.coarse_node_to_fine]


def build_meshes(domain: Domain2D, spec: GridSpec) -> Meshes:
    """Coarse mesh, nested fine mesh and one oversampled patch per coarse element."""
    x0, x1 = domain.x_range
    y0, y1 = domain.y_range
    r = spec.refine
    coarse = StructuredGrid(spec.coarse_nx, spec.coarse_ny, x0, x1, y0, y1)
    fine = StructuredGrid(spec.coarse_nx * r, spec.coarse_ny * r, x0, x1, y0, y1)
    halo = spec.halo_cells
    hx, hy = fine.hx, fine.hy
    patches = []
    for J in range(spec.coarse_ny):
        for I in range(spec.coarse_nx):
            ci0, cj0 = I * r, J * r
            si0, si1 = max(0, ci0 - halo), min(fine.nx, ci0 + r + halo)
            sj0, sj1 = max(0, cj0 - halo), min(fine.ny, cj0 + r + halo)
            element_box = Box(x0 + ci0 * hx, x0 + (ci0 + r) * hx, y0 + cj0 * hy, y0 + (cj0 + r) * hy)
            sample_box = Box(x0 + si0 * hx, x0 + si1 * hx, y0 + sj0 * hy, y0 + sj1 * hy)
            n0 = J * (coarse.nx + 1) + I
            corners = (n0, n0 + 1, n0 + coarse.nx + 2, n0 + coarse.nx + 1)
            patches.append(CoarsePatch(
                patch_id=(I, J),
                element_box=element_box,
                sample_box=sample_box,
                cell_range=(si0, si1, sj0, sj1),
                element_offset=(ci0 - si0, cj0 - sj0),
                refine=r,
                corner_nodes=corners,
                fine_nx=fine.nx,
            ))
    return Meshes(domain, spec, coarse, fine, tuple(patches))


def locate_active_params(patch: CoarsePatch, model) -> tuple[int, ...]:
    """Global indices of the modes whose support box overlaps the sample box.

    A mode without a declared support is treated as globally supported.
    """
    active = []
    for k, mode in enumerate(model.modes):
        if mode.support is None or mode.support.overlaps(patch.sample_box):
            active.append(k)
    return tuple(active)


def with_active_params(meshes: Meshes, model) -> Meshes:
    patches = tuple(replace(p, active_params=locate_active_params(p, model)) for p in meshes.patches)
    return replace(meshes, patches=patches)
