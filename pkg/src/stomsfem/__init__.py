"""Stochastic multiscale finite elements for elliptic problems with random coefficients."""

from .fem_core import DirichletBC, EllipticProblem, SolverError, assemble, solve, solve_problem
from .mesh import Box, Domain2D, GridSpec, Meshes, StructuredGrid, build_meshes
from .msfem import MsFEM
from .random_field import FieldModel, GaussianKernel, GaussianKLField, Gaussian, Uniform, sample_rng
from .sparse_grids import GridKind, sparse_grid, tensor_grid
from .stochastic import (EstimatorReport, EstimatorSpec, balance_budget, run_mc, run_sc,
                         run_two_level_mc)
from .surrogate import SurrogateBank, build_offline

__version__ = "0.1.0"

__all__ = [
    "Box", "Domain2D", "GridSpec", "Meshes", "StructuredGrid", "build_meshes",
    "DirichletBC", "EllipticProblem", "SolverError", "assemble", "solve", "solve_problem",
    "MsFEM", "FieldModel", "GaussianKernel", "GaussianKLField", "Gaussian", "Uniform", "sample_rng",
    "GridKind", "sparse_grid", "tensor_grid", "SurrogateBank", "build_offline",
    "EstimatorReport", "EstimatorSpec", "balance_budget", "run_mc", "run_sc", "run_two_level_mc",
]
