"""Offline surrogates of the local upscaled quantities ``S^m(xi_m)`` and ``b^m(xi_m)``.

Two families are provided:

* ``InterpolantLocal``: values of ``S^m, b^m`` tabulated on a tensor Chebyshev
  or Smolyak grid in the scaled parameter box, evaluated by polynomial (or
  piecewise-linear) interpolation.
* ``ReducedBasisLocal``: for media affine in the local parameters, the raw
  cell solutions ``psi^l`` are compressed by a KL (method of snapshots) in the
  energy inner product of the mean coefficient. Online, a small Galerkin system
  is solved per basis index and ``S^m`` is assembled from precomputed affine
  tensors without touching the fine mesh.

``SurrogateBank`` holds one surrogate per patch (shared between patches with
identical local problems) and persists to an artifact directory.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import CoarsePatch, Meshes
from .msfem import MsFEM
from .random_field import LocalParam, Unsupported
from .sparse_grids import GridKind, InterpolationGrid

log = logging.getLogger(__name__)

ARTIFACT_FORMAT = "stomsfem-offline"
ARTIFACT_VERSION = 1
RANGE_TOL = 1e-12


class OutOfRange(ValueError):
    """Local parameters outside the surrogate box; callers fall back to a direct cell solve."""

    def __init__(self, mask: np.ndarray):
        super().__init__(f"{int(np.sum(~mask))} point(s) outside the surrogate box")
        self.mask = mask


class RBError(np.linalg.LinAlgError):
    pass


class ArtifactError(RuntimeError):
    pass


def to_unit(X: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return 2.0 * (np.asarray(X, float) - lo) / (hi - lo) - 1.0


def from_unit(U: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return lo + (np.asarray(U, float) + 1.0) * 0.5 * (hi - lo)


def _as_points(X, dim: int) -> np.ndarray:
    """``X`` as a (P, dim) array; a flat vector is one point (or several when ``dim`` divides it)."""
    X = np.asarray(X, float)
    if X.ndim == 2:
        return X
    return X.reshape(1, 0) if dim == 0 else X.reshape(-1, dim)


def _in_box(U: np.ndarray) -> np.ndarray:
    if U.shape[1] == 0:
        return np.ones(U.shape[0], dtype=bool)
    return np.all(np.abs(U) <= 1.0 + RANGE_TOL, axis=1)


def _map_parallel(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- random interpolation -----------------------------------------------------


@dataclass
class InterpolantLocal:
    patch_id: tuple[int, int]
    grid_kind: GridKind
    grid: InterpolationGrid
    lo: np.ndarray
    hi: np.ndarray
    S: np.ndarray  # (N, 4, 4) at grid.points
    b: np.ndarray  # (N, 4)

    method = "interp"

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def nodes(self) -> np.ndarray:
        """Grid nodes in native parameter coordinates."""
        return from_unit(self.grid.points, self.lo, self.hi)

    def in_range(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        return _in_box(to_unit(X, self.lo, self.hi))

    def eval_batch(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(S, b, ok)`` for ``P`` parameter points; rows with ``ok == False`` are NaN."""
        X = _as_points(X, self.dim)
        U = to_unit(X, self.lo, self.hi)
        ok = _in_box(U)
        P = X.shape[0]
        S = np.full((P, 4, 4), np.nan)
        b = np.full((P, 4), np.nan)
        if ok.any():
            vals = np.concatenate([self.S.reshape(-1, 16), self.b], axis=1)
            out = self.grid.interpolate(vals, np.clip(U[ok], -1.0, 1.0))
            S[ok] = out[:, :16].reshape(-1, 4, 4)
            b[ok] = out[:, 16:]
        return S, b, ok

    def eval(self, xi):
        from .msfem import LocalUpscaled

        S, b, ok = self.eval_batch(_as_points(np.ravel(xi), self.dim)[:1])
        if not ok[0]:
            raise OutOfRange(ok)
        return LocalUpscaled(S[0], b[0])

    def lookup(self, xi):
        """Stored value at a grid node (search-and-plug-in); ``KeyError`` if absent."""
        from .msfem import LocalUpscaled

        u = to_unit(np.reshape(xi, (-1,)), self.lo, self.hi)
        i = self.grid.lookup(u)
        return LocalUpscaled(self.S[i], self.b[i])

    def arrays(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "S": self.S, "b": self.b,
                "points": self.grid.points}

    @classmethod
    def from_arrays(cls, patch_id, grid_kind: GridKind, arr) -> "InterpolantLocal":
        lo = np.asarray(arr["lo"], float)
        grid = grid_kind.build(lo.size)
        if grid.points.shape != arr["points"].shape or not np.allclose(grid.points, arr["points"], atol=1e-14):
            raise ArtifactError(f"stored nodes of patch {patch_id} do not match {grid.label}")
        return cls(tuple(patch_id), grid_kind, grid, lo, np.asarray(arr["hi"], float),
                   np.asarray(arr["S"]), np.asarray(arr["b"]))


def build_interpolant(local_param: LocalParam, solver: MsFEM, patch: CoarsePatch,
                      grid_kind: GridKind = GridKind(), workers: int = 1) -> InterpolantLocal:
    """Tabulate ``S^m, b^m`` on the interpolation grid of the patch's local parameters."""
    K = local_param.dim
    grid = grid_kind.build(K)
    lo, hi = local_param.lo, local_param.hi
    nodes = from_unit(grid.points, lo, hi)

    def one(x):
        try:
            loc = solver.local(patch, local_param.kappa(x))
        except Exception as exc:
            raise RuntimeError(f"cell solve failed on patch {patch.patch_id} at xi={x.tolist()}: {exc}") from exc
        return loc.S, loc.b

    res = _map_parallel(one, list(nodes), workers)
    S = np.stack([r[0] for r in res])
    b = np.stack([r[1] for r in res])
    return InterpolantLocal(patch.patch_id, grid_kind, grid, lo.copy(), hi.copy(), S, b)


# -- reduced basis --------------------------------------------------------------


@dataclass
class ReducedBasisLocal:
    """Per-index reduced spaces and the affine tensors needed online.

    With ``theta = (1, xi_1, ..., xi_K)`` the reduced systems are
    ``sum_k theta_k A[l][k] c = sum_k theta_k F[l][k]``. The element quantities
    use the extended basis ``[psi_bar^l, zeta^l_1..Q_l]`` stacked over ``l``.
    """

    patch_id: tuple[int, int]
    formulation: str
    lo: np.ndarray
    hi: np.ndarray
    Q: tuple[int, ...]
    energies: list  # full KL spectra per l
    A: list  # per l: (K+1, Q_l, Q_l)
    F: list  # per l: (K+1, Q_l)
    T: np.ndarray  # (K+1, N, N) Galerkin element tensors
    Pt: np.ndarray  # (K+1, N, 4) Petrov-Galerkin tensors against bilinear tests
    corners: np.ndarray  # (N, 4)
    load: np.ndarray  # (N,) Galerkin load against the extended basis
    b_test: np.ndarray  # (4,) Petrov-Galerkin load
    modes: list | None = field(default=None, repr=False)  # per l: (n_sample_nodes, Q_l), optional
    psi_bar: np.ndarray | None = field(default=None, repr=False)

    method = "rb"

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([q + 1 for q in self.Q])])

    def in_range(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        return _in_box(to_unit(X, self.lo, self.hi))

    def coefficients(self, X) -> list[np.ndarray]:
        """Reduced coefficients ``c^l`` (P x Q_l) for each basis index."""
        X = _as_points(X, self.dim)
        theta = np.concatenate([np.ones((X.shape[0], 1)), X], axis=1)
        out = []
        for l in range(4):
            if self.Q[l] == 0:
                out.append(np.zeros((X.shape[0], 0)))
                continue
            A = np.einsum("pk,kij->pij", theta, self.A[l])
            F = theta @ self.F[l]
            try:
                L = np.linalg.cholesky(A)
            except np.linalg.LinAlgError as exc:
                raise RBError(f"reduced matrix of patch {self.patch_id}, index {l} is not SPD") from exc
            y = np.linalg.solve(L, F[..., None])
            out.append(np.linalg.solve(np.swapaxes(L, 1, 2), y)[..., 0])
        return out

    def _extended(self, coeffs) -> np.ndarray:
        P = coeffs[0].shape[0]
        off = self.offsets
        Ch = np.zeros((P, 4, off[-1]))
        for l in range(4):
            Ch[:, l, off[l]] = 1.0
            Ch[:, l, off[l] + 1:off[l + 1]] = coeffs[l]
        return Ch

    def eval_batch(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        X = _as_points(X, self.dim)
        ok = self.in_range(X)
        P = X.shape[0]
        S = np.full((P, 4, 4), np.nan)
        b = np.full((P, 4), np.nan)
        if not ok.any():
            return S, b, ok
        Xo = X[ok]
        theta = np.concatenate([np.ones((Xo.shape[0], 1)), Xo], axis=1)
        Ch = self._extended(self.coefficients(Xo))
        Cm = np.linalg.inv(Ch @ self.corners)
        if self.formulation == "galerkin":
            TT = np.einsum("pk,knm->pnm", theta, self.T)
            S[ok] = Cm @ (Ch @ TT @ np.swapaxes(Ch, 1, 2)) @ np.swapaxes(Cm, 1, 2)
            b[ok] = (Cm @ (Ch @ self.load)[..., None])[..., 0]
        else:
            PP = np.einsum("pk,knl->pnl", theta, self.Pt)
            S[ok] = Cm @ (Ch @ PP)
            b[ok] = self.b_test
        return S, b, ok

    def eval(self, xi):
        from .msfem import LocalUpscaled

        S, b, ok = self.eval_batch(_as_points(np.ravel(xi), self.dim)[:1])
        if not ok[0]:
            raise OutOfRange(ok)
        return LocalUpscaled(S[0], b[0])

    def arrays(self) -> dict:
        arr = {"lo": self.lo, "hi": self.hi, "Q": np.array(self.Q), "T": self.T, "Pt": self.Pt,
               "corners": self.corners, "load": self.load, "b_test": self.b_test}
        for l in range(4):
            arr[f"A{l}"] = self.A[l]
            arr[f"F{l}"] = self.F[l]
            arr[f"E{l}"] = self.energies[l]
        return arr

    @classmethod
    def from_arrays(cls, patch_id, formulation, arr) -> "ReducedBasisLocal":
        return cls(tuple(patch_id), formulation, np.asarray(arr["lo"]), np.asarray(arr["hi"]),
                   tuple(int(q) for q in arr["Q"]), [np.asarray(arr[f"E{l}"]) for l in range(4)],
                   [np.asarray(arr[f"A{l}"]) for l in range(4)], [np.asarray(arr[f"F{l}"]) for l in range(4)],
                   np.asarray(arr["T"]), np.asarray(arr["Pt"]), np.asarray(arr["corners"]),
                   np.asarray(arr["load"]), np.asarray(arr["b_test"]))


def snapshot_kl(D: np.ndarray, w: np.ndarray, K: "np.ndarray | object"):
    """KL of snapshots ``D`` (N x n) with weights ``w`` in the inner product ``K``.

    Returns the weighted mean, the eigenvalues (descending) and a callable that
    maps a mode count to energy-orthonormal modes (n x Q).
    """
    w = np.asarray(w, float) / np.sum(w)
    mean = w @ D
    Y = np.sqrt(w)[:, None] * (D - mean)
    KY = (K @ Y.T)
    corr = Y @ KY
    corr = 0.5 * (corr + corr.T)
    lam, V = np.linalg.eigh(corr)
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.clip(lam, 0.0, None)

    def modes(Q: int) -> np.ndarray:
        if Q == 0:
            return np.zeros((D.shape[1], 0))
        Z = Y.T @ (V[:, :Q] / np.sqrt(lam[:Q]))
        # re-orthonormalize in the energy product; small modes lose accuracy otherwise
        G = Z.T @ (K @ Z)
        L = np.linalg.cholesky(0.5 * (G + G.T))
        return np.linalg.solve(L, Z.T).T

    return mean, lam, modes


def choose_rank(lam: np.ndarray, threshold: float | None, Q: int | None) -> int:
    """Number of KL modes kept: ``sqrt(lam_q / lam_1) >= threshold`` or a fixed count."""
    if lam.size == 0 or lam[0] <= 0:
        return 0
    rank = int(np.sum(lam > lam[0] * 1e-13))  # below this the spectrum is round-off
    if threshold is not None:
        return min(int(np.sum(np.sqrt(lam / lam[0]) >= threshold)), rank)
    return min(int(Q), rank)


def build_reduced_basis(local_param: LocalParam, solver: MsFEM, patch: CoarsePatch,
                        grid_kind: GridKind = GridKind(), threshold: float | None = None,
                        Q: int | None = None, keep_modes: bool = False, workers: int = 1) -> ReducedBasisLocal:
    """Reduced basis for the four cell problems of a patch with an affine medium."""
    if solver.boundary_kind != "bilinear":
        raise Unsupported("reduced basis needs coefficient-independent (bilinear) boundary data")
    k0, G = local_param.affine_parts()
    K = local_param.dim
    if Q is None and threshold is None:
        Q = 3 * K
    geom = solver.geometry(patch)
    grid = grid_kind.build(K)
    lo, hi = local_param.lo, local_param.hi
    nodes = from_unit(grid.points, lo, hi)
    if grid_kind.kind == "tensor_chebyshev":
        w = grid.weights
    else:
        # Smolyak weights can be negative, which breaks the snapshot correlation
        w = np.full(grid.size, 1.0 / grid.size)

    psis = np.stack(_map_parallel(lambda x: geom.cell_solutions(local_param.kappa(x), "bilinear")[0],
                                  list(nodes), workers))
    kbar = local_param.kappa(0.5 * (lo + hi))
    Kbar = geom.op.matrix(kbar)
    parts = [k0] + [G[k] for k in range(K)]
    Ks = [geom.op.matrix(p) for p in parts]
    Kes = [geom.element_op.matrix(p[geom.element_cells]) for p in parts]

    Qs, energies, As, Fs, blocks, modes_all, means = [], [], [], [], [], [], []
    for l in range(4):
        mean, lam, modes = snapshot_kl(psis[:, l, :], w, Kbar)
        q = choose_rank(lam, threshold, Q)
        Z = modes(q)
        Qs.append(q)
        energies.append(lam)
        As.append(np.stack([Z.T @ (Kk @ Z) for Kk in Ks]))
        Fs.append(np.stack([-(Z.T @ (Kk @ mean)) for Kk in Ks]))
        blocks.append(np.column_stack([mean[geom.element_nodes], Z[geom.element_nodes]]))
        modes_all.append(Z)
        means.append(mean)
    B = np.hstack(blocks)
    T = np.stack([B.T @ (Ke @ B) for Ke in Kes])
    Pt = np.stack([B.T @ (Ke @ geom.test_shapes.T) for Ke in Kes])
    r = geom.element.nx
    corner_rows = [0, r, (r + 1) * (r + 1) - 1, r * (r + 1)]
    load = B.T @ solver.element_load(patch)
    rb = ReducedBasisLocal(patch.patch_id, solver.formulation, lo.copy(), hi.copy(), tuple(Qs), energies,
                           As, Fs, T, Pt, B[corner_rows].T.copy(), load, solver.pg_load(patch))
    if keep_modes:
        rb.modes = modes_all
        rb.psi_bar = np.stack(means)
    return rb


# -- per-patch collection ----------------------------------------------------------


class SurrogateBank:
    """Surrogates for every patch plus the local parametrizations used online."""

    def __init__(self, meshes: Meshes, solver: MsFEM, method: str, grid_kind: GridKind,
                 surrogates: dict, params: dict | None = None, options: dict | None = None):
        self.meshes = meshes
        self.solver = solver
        self.method = method
        self.grid_kind = grid_kind
        self.surrogates = surrogates
        self.params = params or {}
        self.options = options or {}
        self.offline_seconds = float(self.options.get("offline_seconds", 0.0))

    def __getitem__(self, patch_id):
        return self.surrogates[tuple(patch_id)]

    def unique(self) -> list:
        seen, out = set(), []
        for s in self.surrogates.values():
            if id(s) not in seen:
                seen.add(id(s))
                out.append(s)
        return out

    def local_dims(self) -> np.ndarray:
        return np.array([self.surrogates[p.patch_id].dim for p in self.meshes.patches])

    def upscale_batch(self, xis: list[np.ndarray], fallback=True):
        """Local matrices for ``P`` samples given per-patch local parameters (P x K_m each).

        Returns ``S_all (P, M, 4, 4)``, ``b_all (P, M, 4)`` and the number of
        direct cell solves used for out-of-box parameters.
        """
        patches = self.meshes.patches
        P = xis[0].shape[0] if xis else 0
        S_all = np.empty((P, len(patches), 4, 4))
        b_all = np.empty((P, len(patches), 4))
        n_fallback = 0
        pg = self.solver.formulation == "petrov_galerkin"
        for m, patch in enumerate(patches):
            sur = self.surrogates[patch.patch_id]
            S, b, ok = sur.eval_batch(xis[m])
            if not ok.all():
                if not fallback:
                    raise OutOfRange(ok)
                lp = self.params[patch.patch_id]
                for p in np.flatnonzero(~ok):
                    loc = self.solver.local(patch, lp.kappa(xis[m][p]))
                    S[p], b[p] = loc.S, loc.b
                    n_fallback += 1
            S_all[:, m] = S
            # Petrov-Galerkin loads do not depend on the medium; shared surrogates carry another patch's
            b_all[:, m] = self.solver.pg_load(patch) if pg else b
        return S_all, b_all, n_fallback

    def lookup_batch(self, xis: list[np.ndarray]):
        """Search-and-plug-in: local matrices read from stored grid nodes."""
        patches = self.meshes.patches
        P = xis[0].shape[0] if xis else 0
        S_all = np.empty((P, len(patches), 4, 4))
        b_all = np.empty((P, len(patches), 4))
        pg = self.solver.formulation == "petrov_galerkin"
        for m, patch in enumerate(patches):
            sur = self.surrogates[patch.patch_id]
            if not isinstance(sur, InterpolantLocal):
                raise TypeError("search-and-plug-in needs interpolation surrogates")
            U = to_unit(xis[m], sur.lo, sur.hi)
            for p in range(P):
                try:
                    i = sur.grid.lookup(U[p])
                except KeyError as exc:
                    raise KeyError(f"patch {patch.patch_id}: offline grid has no node at {xis[m][p].tolist()}") from exc
                S_all[p, m] = sur.S[i]
                b_all[p, m] = self.solver.pg_load(patch) if pg else sur.b[i]
        return S_all, b_all

    # persistence -----------------------------------------------------------------

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files, records = {}, {}
        for k, sur in enumerate(self.unique()):
            name = f"surrogate_{k:05d}.npz"
            np.savez_compressed(d / name, **sur.arrays())
            files[id(sur)] = name
        for pid, sur in self.surrogates.items():
            records[f"{pid[0]},{pid[1]}"] = files[id(sur)]
        kl_files = {}
        for pid, lp in self.params.items():
            kl = getattr(lp, "kl", None)
            if kl is not None and id(kl) not in kl_files:
                name = f"local_kl_{len(kl_files):03d}.npz"
                np.savez_compressed(d / name, eigvals=kl.eigvals, modes=kl.modes, weights=kl.weights,
                                    all_eigvals=kl.all_eigvals, total=kl.total_variance)
                kl_files[id(kl)] = name
        manifest = {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "method": self.method,
            "grid_kind": self.grid_kind.as_dict(),
            "formulation": self.solver.formulation,
            "boundary_kind": self.solver.boundary_kind,
            "coarse": [self.meshes.spec.coarse_nx, self.meshes.spec.coarse_ny],
            "refine": self.meshes.spec.refine,
            "oversample_ratio": self.meshes.spec.oversample_ratio,
            "options": {k: v for k, v in self.options.items() if isinstance(v, (int, float, str, type(None)))},
            "records": records,
            "local_kl": {f"{pid[0]},{pid[1]}": kl_files[id(lp.kl)] for pid, lp in self.params.items()
                         if getattr(lp, "kl", None) is not None},
        }
        tmp = d / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        os.replace(tmp, d / "manifest.json")
        return d

    @classmethod
    def load(cls, directory, meshes: Meshes, solver: MsFEM, params: dict | None = None) -> "SurrogateBank":
        d = Path(directory)
        mpath = d / "manifest.json"
        if not mpath.exists():
            raise ArtifactError(f"no offline artifacts in {d} (missing manifest.json); run the offline stage first")
        man = json.loads(mpath.read_text())
        if man.get("format") != ARTIFACT_FORMAT or man.get("version") != ARTIFACT_VERSION:
            raise ArtifactError(f"unsupported artifact format {man.get('format')} v{man.get('version')}")
        spec = meshes.spec
        if (man["coarse"] != [spec.coarse_nx, spec.coarse_ny] or man["refine"] != spec.refine
                or abs(man["oversample_ratio"] - spec.oversample_ratio) > 1e-12):
            raise ArtifactError("offline artifacts were built for a different mesh")
        if man["formulation"] != solver.formulation or man["boundary_kind"] != solver.boundary_kind:
            raise ArtifactError("offline artifacts were built for a different MsFEM variant")
        gk = GridKind(**man["grid_kind"])
        cache: dict[str, object] = {}
        surrogates = {}
        for key, name in man["records"].items():
            pid = tuple(int(v) for v in key.split(","))
            if name not in cache:
                with np.load(d / name) as arr:
                    if man["method"] == "interp":
                        cache[name] = InterpolantLocal.from_arrays(pid, gk, arr)
                    else:
                        cache[name] = ReducedBasisLocal.from_arrays(pid, man["formulation"], arr)
            surrogates[pid] = cache[name]
        missing = [p.patch_id for p in meshes.patches if p.patch_id not in surrogates]
        if missing:
            raise ArtifactError(f"offline artifacts miss patches {missing[:5]}")
        if params:
            for pid, lp in params.items():
                if lp.dim != surrogates[pid].dim or not np.allclose(lp.lo, surrogates[pid].lo):
                    raise ArtifactError(f"patch {pid}: local parameters differ from the offline build")
        opts = dict(man.get("options", {}))
        return cls(meshes, solver, man["method"], gk, surrogates, params, opts)


def build_offline(meshes: Meshes, medium, solver: MsFEM, method: str = "interp",
                  grid_kind: GridKind = GridKind(), rb_threshold: float | None = None,
                  rb_Q: int | None = None, workers: int = 1) -> SurrogateBank:
    """Build surrogates for every patch, sharing identical local problems."""
    import time

    t0 = time.perf_counter()
    params = {p.patch_id: medium.local_param(meshes, p) for p in meshes.patches}
    share = solver.formulation == "petrov_galerkin"
    built: dict = {}
    surrogates = {}
    for patch in meshes.patches:
        lp = params[patch.patch_id]
        key = lp.share_key if share else None
        if key is not None and key in built:
            surrogates[patch.patch_id] = built[key]
            continue
        if method == "interp":
            sur = build_interpolant(lp, solver, patch, grid_kind, workers)
        elif method == "rb":
            sur = build_reduced_basis(lp, solver, patch, grid_kind, rb_threshold, rb_Q, workers=workers)
        else:
            raise ValueError(f"unknown surrogate method {method!r}")
        surrogates[patch.patch_id] = sur
        if key is not None:
            built[key] = sur
    elapsed = time.perf_counter() - t0
    log.info("offline stage: %d patches, %d distinct surrogates, %.2fs", len(surrogates), len(built) or len(surrogates), elapsed)
    return SurrogateBank(meshes, solver, method, grid_kind, surrogates, params,
                         {"offline_seconds": elapsed, "rb_threshold": rb_threshold, "rb_Q": rb_Q})
