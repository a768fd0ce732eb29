"""Parametrized random media and their local parametrizations.

Two kinds of media are supported. ``FieldModel`` is an affine mode expansion
``T(mean + sum_k g_k xi_k)`` whose modes carry support boxes, so each patch
only sees the few modes that touch it. ``GaussianKLField`` is a stationary
Gaussian field pushed through a transform. On every patch it is
re-parametrized by the patch's own KL expansion, which decays much faster
than the global one.

Everything a surrogate needs from a medium goes through ``LocalParam``: the
local coefficient as a function of ``K_m`` local parameters, its affine
decomposition when one exists, and the map from a global sample to local
parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .mesh import Box, CoarsePatch, Meshes, StructuredGrid

log = logging.getLogger(__name__)

PSD_RTOL = 1e-10
LAMBDA_FLOOR = 1e-14


class Unsupported(RuntimeError):
    """Raised when an operation needs structure (e.g. affinity) the medium lacks."""


class KernelError(ValueError):
    pass


class EllipticityError(ValueError):
    pass


def sample_rng(root_seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for sample ``index`` of ``stream``; independent of evaluation order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(root_seed), spawn_key=(stream, index)))


# -- parameter distributions -------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"empty range [{self.a}, {self.b}]")

    bounded = True

    @property
    def box(self) -> tuple[float, float]:
        return self.a, self.b

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.a, self.b, size)


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    std: float = 1.0
    truncation: float = 3.0

    bounded = False

    @property
    def box(self) -> tuple[float, float]:
        """Box used to build surrogates; samples outside it trigger direct solves."""
        return self.mean - self.truncation * self.std, self.mean + self.truncation * self.std

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, self.std, size)


# -- transforms --------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    name = "identity"
    affine = True

    def __call__(self, beta):
        return beta


@dataclass(frozen=True)
class ExpShift:
    """``kappa = kappa_min + exp(beta)``."""

    kappa_min: float = 0.1
    name = "exp_shift"
    affine = False

    def __call__(self, beta):
        return self.kappa_min + np.exp(beta)


@dataclass(frozen=True)
class TanhBounded:
    """``kappa`` between ``kappa_min`` and ``kappa_max`` via ``(1 + tanh(beta)) / 2``."""

    kappa_min: float = 0.1
    kappa_max: float = 10.0
    name = "tanh_bounded"
    affine = False

    def __call__(self, beta):
        return self.kappa_min + 0.5 * (self.kappa_max - self.kappa_min) * (1.0 + np.tanh(beta))


def make_transform(spec) -> Identity | ExpShift | TanhBounded:
    if spec is None or spec == "identity":
        return Identity()
    if isinstance(spec, (Identity, ExpShift, TanhBounded)):
        return spec
    name = spec["kind"] if isinstance(spec, dict) else spec
    args = {k: v for k, v in spec.items() if k != "kind"} if isinstance(spec, dict) else {}
    table = {"identity": Identity, "exp_shift": ExpShift, "tanh_bounded": TanhBounded}
    if name not in table:
        raise ValueError(f"unknown transform {name!r}")
    return table[name](**args)


# -- affine mode expansions --------------------------------------------------


@dataclass(frozen=True)
class Mode:
    """Spatial mode ``g_k`` with an optional support box (``None`` means global)."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    support: Box | None = None
    name: str = ""


def indicator_mode(box: Box, value: float = 1.0, name: str = "") -> Mode:
    def g(x, y, box=box, value=value):
        inside = (x >= box.x0) & (x <= box.x1) & (y >= box.y0) & (y <= box.y1)
        return np.where(inside, value, 0.0)

    return Mode(g, box, name)


def constant_mode(value: float = 1.0, name: str = "") -> Mode:
    return Mode(lambda x, y, v=value: np.full(np.shape(x), v, dtype=float), None, name)


@dataclass(frozen=True)
class FieldSample:
    """One medium realization: parameters, coefficient on fine cells, and the
    pre-transform field when the medium has one."""

    xi: np.ndarray
    kappa: np.ndarray
    beta: np.ndarray | None = None


class FieldModel:
    """``kappa(x, xi) = T(mean(x) + sum_k g_k(x) xi_k)`` evaluated at cell centres."""

    def __init__(self, mean: Callable, modes: Sequence[Mode], dists: Sequence, transform=None,
                 name: str = "custom"):
        if len(modes) != len(dists):
            raise ValueError("need one distribution per mode")
        self.mean = mean
        self.modes = tuple(modes)
        self.dists = tuple(dists)
        self.transform = make_transform(transform)
        self.name = name
        self._cache: dict = {}

    @property
    def n_params(self) -> int:
        return len(self.modes)

    @property
    def is_affine(self) -> bool:
        return self.transform.affine

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = zip(*(d.box for d in self.dists)) if self.dists else ((), ())
        return np.array(lo, dtype=float), np.array(hi, dtype=float)

    def cell_parts(self, grid: StructuredGrid) -> tuple[np.ndarray, np.ndarray]:
        """Mean and mode values (``K x n_cells``) at the cell centres of ``grid``."""
        if grid not in self._cache:
            x, y = grid.cell_centers[:, 0], grid.cell_centers[:, 1]
            mean = np.broadcast_to(np.asarray(self.mean(x, y), float), (grid.n_cells,)).copy()
            G = np.zeros((self.n_params, grid.n_cells))
            for k, m in enumerate(self.modes):
                G[k] = m.func(x, y)
            self._cache[grid] = (mean, G)
        return self._cache[grid]

    def beta(self, grid: StructuredGrid, xi) -> np.ndarray:
        mean, G = self.cell_parts(grid)
        return mean + np.asarray(xi, float) @ G

    def field(self, grid: StructuredGrid, xi) -> np.ndarray:
        return self.transform(self.beta(grid, xi))

    def sample_xi(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([d.sample(rng) for d in self.dists], dtype=float)

    def sample(self, rng: np.random.Generator | int, grid: StructuredGrid) -> FieldSample:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        xi = self.sample_xi(rng)
        b = self.beta(grid, xi)
        return FieldSample(xi, self.transform(b), b)

    def check_ellipticity(self, grid: StructuredGrid, alpha: float = 0.0) -> float:
        """Smallest coefficient value over the parameter box; raises if ``<= alpha``.

        The pre-transform field is affine in ``xi`` and every transform is
        monotone, so the cellwise minimum is attained at a box vertex that can
        be picked per cell without enumerating vertices.
        """
        mean, G = self.cell_parts(grid)
        if not all(d.bounded for d in self.dists) and self.transform.affine:
            raise EllipticityError("unbounded parameters with an affine transform cannot be uniformly positive")
        lo, hi = self.box
        bmin = mean + np.minimum(G * lo[:, None], G * hi[:, None]).sum(axis=0)
        kmin = float(np.min(self.transform(bmin)))
        if not kmin > alpha:
            raise EllipticityError(f"coefficient reaches {kmin:.3e} <= {alpha}")
        return kmin

    def local_param(self, meshes: Meshes, patch: CoarsePatch) -> "AffineLocal":
        return AffineLocal(self, meshes, patch)


# -- covariance kernels and KL ----------------------------------------------


@dataclass(frozen=True)
class GaussianKernel:
    """``variance * exp(-(dx/l1)^2 - (dy/l2)^2)``."""

    l1: float
    l2: float
    variance: float = 1.0
    separable = True

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        dx = X[:, None, 0] - Y[None, :, 0]
        dy = X[:, None, 1] - Y[None, :, 1]
        return self.variance * np.exp(-(dx / self.l1) ** 2 - (dy / self.l2) ** 2)

    def factors(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        kx = np.exp(-((x[:, None] - x[None, :]) / self.l1) ** 2)
        ky = self.variance * np.exp(-((y[:, None] - y[None, :]) / self.l2) ** 2)
        return kx, ky


@dataclass(frozen=True)
class ExplicitKernel:
    """Covariance given as a matrix on a fixed point set."""

    matrix: np.ndarray = field(repr=False)
    separable = False

    def __call__(self, X, Y):
        if len(X) != self.matrix.shape[0] or len(Y) != self.matrix.shape[1]:
            raise KernelError("explicit kernel evaluated on a point set of the wrong size")
        return self.matrix


@dataclass(frozen=True)
class KeepFraction:
    p: float


@dataclass(frozen=True)
class KeepCount:
    k: int


def _criterion(c) -> KeepFraction | KeepCount:
    if isinstance(c, (KeepFraction, KeepCount)):
        return c
    if isinstance(c, float) and 0 < c <= 1:
        return KeepFraction(c)
    if isinstance(c, int) and c >= 0:
        return KeepCount(c)
    raise ValueError(f"bad truncation criterion {c!r}")


def count_for_fraction(eigvals: np.ndarray, p: float) -> int:
    total = eigvals.sum()
    if total <= 0:
        return 0
    frac = np.cumsum(eigvals) / total
    return int(min(np.searchsorted(frac, p - 1e-12) + 1, eigvals.size))


@dataclass
class LocalKL:
    """Truncated KL on a point set with quadrature weights.

    ``modes[k]`` holds ``f_k`` at the points; ``sum(w * f_j * f_k) = delta_jk``.
    ``all_eigvals`` keeps the full (clamped) spectrum for diagnostics.
    """

    eigvals: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    all_eigvals: np.ndarray
    total_variance: float
    patch_id: tuple | None = None

    @property
    def K(self) -> int:
        return self.eigvals.size

    @property
    def captured_fraction(self) -> float:
        return float(self.eigvals.sum() / self.total_variance) if self.total_variance > 0 else 1.0

    def count_for(self, p: float) -> int:
        return count_for_fraction(self.all_eigvals, p)

    def synthesize(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, float)
        return (xi * np.sqrt(self.eigvals)) @ self.modes

    def truncated(self, criterion) -> "LocalKL":
        c = _criterion(criterion)
        K = c.k if isinstance(c, KeepCount) else count_for_fraction(self.all_eigvals, c.p)
        if K > self.K:
            raise ValueError(f"only {self.K} modes stored, {K} requested")
        return LocalKL(self.eigvals[:K], self.modes[:K], self.weights, self.all_eigvals,
                       self.total_variance, self.patch_id)


def _clamp_psd(vals: np.ndarray) -> np.ndarray:
    lmax = max(float(vals.max(initial=0.0)), 0.0)
    if vals.size and vals.min() < -PSD_RTOL * max(lmax, 1e-300):
        raise KernelError(f"covariance is not positive semidefinite (eigenvalue {vals.min():.3e}, max {lmax:.3e})")
    return np.clip(vals, 0.0, None)


def build_local_kl(kernel, points: np.ndarray, weights: np.ndarray | float, criterion=0.99,
                   shape: tuple[int, int] | None = None, patch_id=None, max_modes: int | None = None) -> LocalKL:
    """Nystrom KL of ``kernel`` on ``points`` with quadrature ``weights``.

    When the kernel is separable and the points form a tensor grid of ``shape``
    ``(nx, ny)`` (x fastest), the eigenproblem splits into two 1D problems.
    """
    points = np.asarray(points, float)
    n = points.shape[0]
    w = np.broadcast_to(np.asarray(weights, float), (n,)).copy()
    c = _criterion(criterion)
    if getattr(kernel, "separable", False) and shape is not None:
        nx, ny = shape
        P = points.reshape(ny, nx, 2)
        x, y = P[0, :, 0], P[:, 0, 1]
        W = w.reshape(ny, nx)
        wx, wy = W[0, :] / W[0, 0] * np.sqrt(W[0, 0]), W[:, 0] / W[0, 0] * np.sqrt(W[0, 0])
        if not np.allclose(np.outer(wy, wx), W, rtol=1e-12, atol=0):
            raise KernelError("weights are not a tensor product")
        kx, ky = kernel.factors(x, y)
        lx, vx = _weighted_eig(kx, wx)
        ly, vy = _weighted_eig(ky, wy)
        prod = np.outer(ly, lx).ravel()
        order = np.argsort(-prod, kind="stable")
        all_vals = prod[order]
        total = float(np.sum(wx * np.diag(kx)) * np.sum(wy * np.diag(ky)))
        K = c.k if isinstance(c, KeepCount) else count_for_fraction(all_vals, c.p)
        if max_modes is not None:
            K = max(K, min(max_modes, all_vals.size))
        jy, ix = np.divmod(order[:K], nx)
        modes = vy[:, jy].T[:, :, None] * vx[:, ix].T[:, None, :]
        modes = modes.reshape(K, n)
    else:
        C = np.asarray(kernel(points, points), float)
        if not np.allclose(C, C.T, rtol=1e-12, atol=1e-14):
            raise KernelError("covariance matrix is not symmetric")
        all_vals, V = _weighted_eig(C, w)
        total = float(np.sum(w * np.diag(C)))
        K = c.k if isinstance(c, KeepCount) else count_for_fraction(all_vals, c.p)
        if max_modes is not None:
            K = max(K, min(max_modes, all_vals.size))
        modes = V[:, :K].T
    return LocalKL(all_vals[:K].copy(), np.ascontiguousarray(modes), w, all_vals, total, patch_id)


def _weighted_eig(C: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of ``C W`` with eigenvectors orthonormal in the ``w``-weighted product."""
    sw = np.sqrt(w)
    vals, V = np.linalg.eigh(sw[:, None] * C * sw[None, :])
    vals, V = vals[::-1], V[:, ::-1]
    vals = _clamp_psd(vals)
    F = V / sw[:, None]
    # fix sign so the largest-magnitude entry is positive; keeps modes reproducible
    idx = np.argmax(np.abs(F), axis=0)
    F *= np.sign(F[idx, np.arange(F.shape[1])])
    return vals, F


def project_to_local(deviation: np.ndarray, kl: LocalKL, report: list | None = None) -> np.ndarray:
    """``xi_k = (1/sqrt(lambda_k)) sum_i w_i dev_i f_k(x_i)``; modes with tiny eigenvalues give 0."""
    dev = np.asarray(deviation, float)
    proj = (dev * kl.weights) @ kl.modes.T
    ok = kl.eigvals > LAMBDA_FLOOR
    out = np.zeros(proj.shape)
    out[..., ok] = proj[..., ok] / np.sqrt(kl.eigvals[ok])
    if report is not None:
        report.extend(np.flatnonzero(~ok).tolist())
    return out


def local_kl_for_patch(kernel, meshes: Meshes, patch: CoarsePatch, criterion=0.99, **kw) -> LocalKL:
    fine = meshes.fine
    cells = patch.fine_cells
    return build_local_kl(kernel, fine.cell_centers[cells], fine.cell_area, criterion,
                          shape=patch.sample_shape, patch_id=patch.patch_id, **kw)


def global_kl(kernel, grid: StructuredGrid, criterion=0.999, **kw) -> LocalKL:
    return build_local_kl(kernel, grid.cell_centers, grid.cell_area, criterion, shape=(grid.nx, grid.ny), **kw)


class GaussianKLField:
    """``kappa = T(beta)`` with ``beta`` a zero-mean Gaussian field of covariance ``kernel``.

    Samples come from the global KL truncated at ``sampler_fraction`` of the
    spectrum; each patch is re-parametrized by its local KL truncated at
    ``local_criterion``.
    """

    def __init__(self, kernel, transform=None, local_criterion=0.99, sampler_fraction: float = 0.999,
                 truncation: float = 3.0, name: str = "gaussian_kl"):
        self.kernel = kernel
        self.transform = make_transform(transform or ExpShift(0.1))
        self.local_criterion = local_criterion
        self.sampler_fraction = sampler_fraction
        self.truncation = truncation
        self.name = name
        self.modes = ()
        self._global: dict = {}
        self._local: dict = {}

    is_affine = False

    def sampler(self, grid: StructuredGrid) -> LocalKL:
        if grid not in self._global:
            self._global[grid] = global_kl(self.kernel, grid, self.sampler_fraction)
        return self._global[grid]

    def sample(self, rng: np.random.Generator | int, grid: StructuredGrid) -> FieldSample:
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        kl = self.sampler(grid)
        xi = rng.standard_normal(kl.K)
        beta = kl.synthesize(xi)
        return FieldSample(xi, self.transform(beta), beta)

    def field(self, grid: StructuredGrid, xi) -> np.ndarray:
        return self.transform(self.sampler(grid).synthesize(xi))

    def local_kl(self, meshes: Meshes, patch: CoarsePatch) -> LocalKL:
        # stationary kernel: the local KL only depends on the sample box shape
        key = (patch.sample_shape, meshes.fine.hx, meshes.fine.hy, self.local_criterion)
        if key not in self._local:
            self._local[key] = local_kl_for_patch(self.kernel, meshes, patch, self.local_criterion)
        return self._local[key]

    def local_param(self, meshes: Meshes, patch: CoarsePatch) -> "KLLocal":
        return KLLocal(self.local_kl(meshes, patch), self.transform, patch, self.truncation)


# -- local parametrizations ---------------------------------------------------


class LocalParam:
    """Coefficient on a patch's sample box as a function of ``K_m`` local parameters."""

    patch: CoarsePatch
    lo: np.ndarray
    hi: np.ndarray

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def share_key(self):
        """Patches with equal keys have identical local problems (``None``: never shared)."""
        return None

    def kappa(self, xi_local) -> np.ndarray:
        raise NotImplementedError

    def affine_parts(self) -> tuple[np.ndarray, np.ndarray]:
        """``(kappa_0, G)`` with ``kappa = kappa_0 + xi @ G`` on the sample box."""
        raise Unsupported(f"{type(self).__name__} has no affine structure")

    def extract(self, sample: FieldSample) -> np.ndarray:
        raise NotImplementedError

    def exact_kappa(self, sample: FieldSample) -> np.ndarray:
        """The sample's own coefficient on the sample box (no local truncation)."""
        return sample.kappa[self.patch.fine_cells]


class AffineLocal(LocalParam):
    def __init__(self, model: FieldModel, meshes: Meshes, patch: CoarsePatch):
        from .mesh import locate_active_params

        self.patch = patch
        self.transform = model.transform
        self.active = np.array(patch.active_params or locate_active_params(patch, model), dtype=int)
        mean, G = model.cell_parts(meshes.fine)
        cells = patch.fine_cells
        self.mean = mean[cells]
        self.G = G[self.active][:, cells]
        lo, hi = model.box
        self.lo, self.hi = lo[self.active], hi[self.active]

    def kappa(self, xi_local) -> np.ndarray:
        return self.transform(self.mean + np.asarray(xi_local, float) @ self.G)

    def affine_parts(self):
        if not self.transform.affine:
            raise Unsupported("transformed mode expansion is not affine in the parameters")
        return self.mean, self.G

    def extract(self, sample: FieldSample) -> np.ndarray:
        return np.asarray(sample.xi, float)[self.active]


class KLLocal(LocalParam):
    def __init__(self, kl: LocalKL, transform, patch: CoarsePatch, truncation: float = 3.0):
        self.kl = kl
        self.patch = patch
        self.transform = transform
        self.truncation = truncation
        self.lo = np.full(kl.K, -truncation)
        self.hi = np.full(kl.K, truncation)

    @property
    def share_key(self):
        return ("kl", self.patch.geometry_key, self.kl.K, id(self.kl))

    @cached_property
    def _scaled(self) -> np.ndarray:
        return np.sqrt(self.kl.eigvals)[:, None] * self.kl.modes

    def kappa(self, xi_local) -> np.ndarray:
        return self.transform(np.asarray(xi_local, float) @ self._scaled)

    def affine_parts(self):
        if self.transform.affine:
            return np.zeros(self.kl.modes.shape[1]), self._scaled
        raise Unsupported("local KL of a transformed Gaussian field is not affine")

    def extract(self, sample: FieldSample) -> np.ndarray:
        if sample.beta is None:
            raise ValueError("sample carries no pre-transform field to project")
        return project_to_local(sample.beta[self.patch.fine_cells], self.kl)
