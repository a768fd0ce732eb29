"""Tensor and Smolyak sparse grids on ``[-1, 1]^d`` for interpolation and quadrature.

Quadrature weights are for the uniform probability density on the cube, so
they sum to one. Interpolation is by barycentric Lagrange formulas for the
polynomial rules and by hat functions for the trapezoidal rule.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import chebyshev as C

RULES = ("chebyshev", "clenshaw_curtis", "trapezoidal")
KEY_DECIMALS = 12


@dataclass(frozen=True)
class Rule1D:
    """One-dimensional node set with interpolation and quadrature data."""

    kind: str
    nodes: np.ndarray
    bary: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    def basis(self, x: np.ndarray) -> np.ndarray:
        """(P, m) matrix of cardinal functions at the points ``x``."""
        x = np.asarray(x, float).ravel()
        m = self.size
        if m == 1:
            return np.ones((x.size, 1))
        if self.kind == "trapezoidal":
            return _hat_basis(self.nodes, x)
        d = x[:, None] - self.nodes[None, :]
        exact = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            q = self.bary[None, :] / d
            L = q / q.sum(axis=1, keepdims=True)
        hit = exact.any(axis=1)
        if hit.any():
            L[hit] = exact[hit].astype(float)
        return L


def _hat_basis(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    m = nodes.size
    k = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, m - 2)
    t = (x - nodes[k]) / (nodes[k + 1] - nodes[k])
    L = np.zeros((x.size, m))
    rows = np.arange(x.size)
    L[rows, k] = 1.0 - t
    L[rows, k + 1] += t
    return L


def _uniform_moments(n: int) -> np.ndarray:
    k = np.arange(n)
    mom = np.zeros(n)
    even = k % 2 == 0
    mom[even] = 1.0 / (1.0 - k[even] ** 2)
    return mom


def _interp_weights(nodes: np.ndarray) -> np.ndarray:
    """Interpolatory quadrature weights for the uniform density on [-1, 1]."""
    V = C.chebvander(nodes, nodes.size - 1)
    return np.linalg.solve(V.T, _uniform_moments(nodes.size))


@lru_cache(maxsize=None)
def chebyshev_rule(n: int) -> Rule1D:
    """Zeros of ``T_n`` (first kind), ascending."""
    if n < 1:
        raise ValueError("need at least one node")
    j = np.arange(n)
    theta = (2 * j + 1) * np.pi / (2 * n)
    nodes = np.cos(theta)[::-1].copy()
    bary = ((-1.0) ** j * np.sin(theta))[::-1].copy()
    return Rule1D("chebyshev", nodes, bary, _interp_weights(nodes))


def cc_size(level: int) -> int:
    return 1 if level == 1 else 2 ** (level - 1) + 1


@lru_cache(maxsize=None)
def clenshaw_curtis_rule(level: int) -> Rule1D:
    """Nested Chebyshev extrema; level 1 is the single midpoint."""
    if level < 1:
        raise ValueError("levels start at 1")
    m = cc_size(level)
    if m == 1:
        return Rule1D("clenshaw_curtis", np.zeros(1), np.ones(1), np.ones(1))
    j = np.arange(m)
    nodes = -np.cos(np.pi * j / (m - 1))
    nodes[np.abs(nodes) < 1e-15] = 0.0
    bary = (-1.0) ** j
    bary[[0, -1]] *= 0.5
    return Rule1D("clenshaw_curtis", nodes, bary, _interp_weights(nodes))


@lru_cache(maxsize=None)
def trapezoidal_rule(level: int) -> Rule1D:
    """Nested equispaced points with piecewise-linear interpolation."""
    if level < 1:
        raise ValueError("levels start at 1")
    m = cc_size(level)
    if m == 1:
        return Rule1D("trapezoidal", np.zeros(1), np.ones(1), np.ones(1))
    nodes = np.linspace(-1.0, 1.0, m)
    w = np.full(m, 1.0 / (m - 1))
    w[[0, -1]] *= 0.5
    return Rule1D("trapezoidal", nodes, np.ones(m), w)


def rule_for(kind: str, index: int) -> Rule1D:
    if kind == "chebyshev":
        return chebyshev_rule(index)
    if kind == "clenshaw_curtis":
        return clenshaw_curtis_rule(index)
    if kind == "trapezoidal":
        return trapezoidal_rule(index)
    raise ValueError(f"unknown rule {kind!r}; expected one of {RULES}")


def point_key(x) -> tuple:
    return tuple(np.round(np.asarray(x, float), KEY_DECIMALS) + 0.0)


@dataclass
class _Component:
    coef: float
    rules: tuple[Rule1D, ...]
    index: np.ndarray  # shape (m_1, ..., m_d) into the point list


class InterpolationGrid:
    """Linear combination of tensor grids sharing one list of unique points."""

    def __init__(self, dim: int, components: list[tuple[float, tuple[Rule1D, ...]]], label: str):
        self.dim = dim
        self.label = label
        keys: dict[tuple, int] = {}
        pts: list[np.ndarray] = []
        comps = []
        weights: dict[int, float] = {}
        for coef, rules in components:
            shape = tuple(r.size for r in rules)
            idx = np.empty(shape, dtype=np.int64)
            for multi in itertools.product(*(range(s) for s in shape)):
                p = np.array([r.nodes[j] for r, j in zip(rules, multi)])
                k = point_key(p)
                if k not in keys:
                    keys[k] = len(pts)
                    pts.append(p)
                i = keys[k]
                idx[multi] = i
                w = coef * np.prod([r.weights[j] for r, j in zip(rules, multi)]) if rules else coef
                weights[i] = weights.get(i, 0.0) + w
            comps.append(_Component(coef, rules, idx))
        self.points = np.array(pts, dtype=float).reshape(len(pts), dim)
        self.weights = np.array([weights[i] for i in range(len(pts))])
        self.components = comps
        self._keys = keys

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def lookup(self, x) -> int:
        k = point_key(x)
        if k not in self._keys:
            raise KeyError(f"point {tuple(np.asarray(x))} is not a node of {self.label}")
        return self._keys[k]

    def has_point(self, x) -> bool:
        return point_key(x) in self._keys

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, np.asarray(values, float), axes=(0, 0))

    def interpolate(self, values: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Evaluate the interpolant of node ``values`` (N x ...) at points ``X`` (P x d)."""
        values = np.asarray(values, float)
        tail = values.shape[1:]
        V = values.reshape(values.shape[0], -1)
        X = np.atleast_2d(np.asarray(X, float))
        P = X.shape[0]
        if self.dim == 0:
            return np.broadcast_to(V[0], (P, V.shape[1])).reshape((P,) + tail).copy()
        out = np.zeros((P, V.shape[1]))
        for comp in self.components:
            T = V[comp.index]  # (m_1, ..., m_d, F)
            Ls = [r.basis(X[:, k]) for k, r in enumerate(comp.rules)]
            R = np.einsum("pi,i...->p...", Ls[0], T)
            for L in Ls[1:]:
                R = np.einsum("pi,pi...->p...", L, R)
            out += comp.coef * R
        return out.reshape((P,) + tail)


def tensor_grid(dim: int, nodes_per_dim, rule: str = "chebyshev") -> InterpolationGrid:
    """Full tensor grid; ``nodes_per_dim`` is a count (Chebyshev) or level (others) per axis."""
    n = np.broadcast_to(np.asarray(nodes_per_dim, int), (dim,))
    rules = tuple(rule_for(rule, int(k)) for k in n)
    return InterpolationGrid(dim, [(1.0, rules)], f"tensor {rule} {tuple(n.tolist())}")


def smolyak_indices(dim: int, level: int):
    """Multi-indices (levels from 1) entering the combination formula, with coefficients."""
    q = level + dim - 1
    out = []
    for total in range(max(dim, q - dim + 1), q + 1):
        coef = (-1) ** (q - total) * comb(dim - 1, q - total)
        for idx in _compositions(total, dim):
            out.append((float(coef), idx))
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def sparse_grid(dim: int, level: int, rule: str = "clenshaw_curtis") -> InterpolationGrid:
    """Isotropic Smolyak grid; level 1 is the single centre point."""
    if level < 1:
        raise ValueError("levels start at 1")
    if rule not in ("clenshaw_curtis", "trapezoidal"):
        raise ValueError("sparse grids need a nested rule")
    if dim == 0:
        return InterpolationGrid(0, [(1.0, ())], "empty")
    comps = [(c, tuple(rule_for(rule, i) for i in idx)) for c, idx in smolyak_indices(dim, level)]
    return InterpolationGrid(dim, comps, f"sparse {rule} level {level}")


@dataclass(frozen=True)
class GridKind:
    """Surrogate grid choice: ``tensor_chebyshev`` with ``nodes_per_dim`` or a sparse rule with ``level``."""

    kind: str = "tensor_chebyshev"
    nodes_per_dim: int = 9
    level: int = 4

    def __post_init__(self):
        if self.kind not in ("tensor_chebyshev", "sparse_clenshaw_curtis", "sparse_trapezoidal"):
            raise ValueError(f"unknown grid kind {self.kind!r}")

    def build(self, dim: int) -> InterpolationGrid:
        if self.kind == "tensor_chebyshev":
            return tensor_grid(dim, self.nodes_per_dim, "chebyshev")
        rule = "clenshaw_curtis" if self.kind == "sparse_clenshaw_curtis" else "trapezoidal"
        return sparse_grid(dim, self.level, rule)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "nodes_per_dim": self.nodes_per_dim, "level": self.level}
