import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stomsfem.mesh import Box, Domain2D, GridSpec, StructuredGrid, build_meshes
from stomsfem.msfem import MsFEM
from stomsfem.random_field import FieldModel, FieldSample, Uniform, constant_mode, indicator_mode
from stomsfem.stochastic import (DirectMsFEMSolver, EstimatorSpec, FineSolver, FunctionSolver, balance_budget,
                                 draw_samples, fit_rate, l2_norm, run_mc, run_sc, run_two_level_mc)


def toy_sampler(rng):
    return FieldSample(np.array([rng.uniform()]), np.zeros(1))


SQUARE = FunctionSolver(lambda s: s.xi ** 2)  # E = 1/3, Var = 4/45


def small_problem():
    modes = [constant_mode(1.0), indicator_mode(Box(0.25, 0.5, 0.0, 1.0), 4.0)]
    model = FieldModel(lambda x, y: 1.0 + 0.5 * np.sin(6 * x) * np.sin(5 * y), modes,
                       [Uniform(0.0, 1.0), Uniform(0.0, 1.0)])
    m = build_meshes(Domain2D(), GridSpec(4, 4, 4, 1.0))
    return m, model, (lambda rng: model.sample(rng, m.fine))


def test_constant_integrand_is_exact():
    rep = run_mc(37, toy_sampler, FunctionSolver(lambda s: np.array([2.5, -1.0])), seed=4)
    np.testing.assert_array_equal(rep.mean, [2.5, -1.0])
    np.testing.assert_array_equal(rep.variance, [0.0, 0.0])


def test_mc_error_decays_at_half_order():
    ns, errs = [100, 1000, 10000], []
    for n in ns:
        e = [run_mc(n, toy_sampler, SQUARE, seed=s).mean[0] - 1 / 3 for s in range(24)]
        errs.append(np.sqrt(np.mean(np.square(e))))
    rate, r2 = fit_rate(ns, errs)
    assert 0.35 <= rate <= 0.65


def test_mc_is_unbiased():
    est = np.array([run_mc(20, toy_sampler, SQUARE, seed=1000 + s).mean[0] for s in range(200)])
    se = est.std(ddof=1) / np.sqrt(est.size)
    assert abs(est.mean() - 1 / 3) <= 3 * se


def test_variance_uses_one_over_n():
    rep = run_mc(50, toy_sampler, SQUARE, seed=2, keep_samples=True)
    U = rep.extra["samples"][:, 0]
    assert rep.variance[0] == pytest.approx(np.var(U), rel=1e-14)


def test_results_do_not_depend_on_batching_or_workers():
    m, model, sampler = small_problem()
    solver = DirectMsFEMSolver(MsFEM(m))
    a = run_mc(12, sampler, solver, seed=9, batch=64, workers=1)
    b = run_mc(12, sampler, solver, seed=9, batch=5, workers=3)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.variance, b.variance)


def test_two_level_correction_vanishes_when_levels_coincide():
    m, model, sampler = small_problem()
    m1 = build_meshes(Domain2D(), GridSpec(8, 8, 1, 1.0))
    sampler1 = lambda rng: model.sample(rng, m1.fine)
    rep = run_two_level_mc(10, 6, sampler1, DirectMsFEMSolver(MsFEM(m1)), FineSolver(m1), seed=3)
    assert np.abs(rep.extra["correction_variance"]).max() < 1e-24
    assert np.abs(rep.extra["correction_mean"]).max() < 1e-12


def test_two_level_without_fine_samples_is_mc():
    m, model, sampler = small_problem()
    solver = DirectMsFEMSolver(MsFEM(m))
    a = run_two_level_mc(8, 0, sampler, solver, FineSolver(m), seed=1)
    b = run_mc(8, sampler, solver, seed=1)
    np.testing.assert_array_equal(a.mean, b.mean)


def test_two_level_identity_and_variance_reduction():
    m, model, sampler = small_problem()
    coarse, fine = DirectMsFEMSolver(MsFEM(m)), FineSolver(m)
    rep = run_two_level_mc(40, 40, sampler, coarse, fine, seed=5)
    np.testing.assert_array_equal(rep.mean, rep.extra["coarse_mean"] + rep.extra["correction_mean"])
    # the correction uses its own sample stream
    ss = draw_samples(sampler, 5, range(40), 1)
    D = fine.solve_many(ss) - coarse.solve_many(ss)
    np.testing.assert_allclose(rep.extra["correction_mean"], D.mean(0), atol=1e-15)
    w = m.coarse.node_weights()
    assert np.sum(w * rep.extra["correction_variance"]) < 0.1 * np.sum(w * rep.extra["fine_variance"])


def _uniform_model(d):
    return FieldModel(lambda x, y: 0 * x, [constant_mode(1.0)] * d, [Uniform(-1.0, 3.0)] * d)


@pytest.mark.parametrize("rule", ["clenshaw_curtis", "trapezoidal"])
def test_collocation_integrates_polynomials(rule):
    d, level = 3, 4
    model = _uniform_model(d)
    g = StructuredGrid(1, 1, 0, 1, 0, 1)
    # on [-1, 3]: E[x^k] = (3^(k+1) - (-1)^(k+1)) / (4 (k+1)), so E[x] = 1, E[x^2] = 7/3, E[x^3] = 5, E[x^4] = 61/5
    if rule == "clenshaw_curtis":
        f = lambda s: np.array([s.xi[0] ** 3 + s.xi[1] * s.xi[2], s.xi[0] ** 2])
        exact_mean = [5 + 1, 7 / 3]
        exact_var2 = 61 / 5 - (7 / 3) ** 2
    else:
        f = lambda s: np.array([2 * s.xi[0] - s.xi[1] + 0.5 * s.xi[2], 1.0])
        exact_mean = [1.5, 1.0]
    rep = run_sc(model, FunctionSolver(f), g, level, rule)
    np.testing.assert_allclose(rep.mean, exact_mean, atol=1e-10)
    assert rep.extra["weights_sum"] == pytest.approx(1.0, abs=1e-12)
    if rule == "clenshaw_curtis":
        assert rep.variance[1] == pytest.approx(exact_var2, abs=1e-10)
    assert rep.variance.min() >= -1e-12


def test_collocation_variance_is_never_negative():
    model = _uniform_model(4)
    rep = run_sc(model, FunctionSolver(lambda s: np.array([np.exp(3 * s.xi[0]) * np.cos(4 * s.xi[1])])),
                 StructuredGrid(1, 1, 0, 1, 0, 1), 2)
    assert rep.variance.min() >= -1e-12


def test_budget_balance():
    assert balance_budget(0.1, 4) == 10000
    assert balance_budget(0.1, 4, 4, "sc") == 10
    assert balance_budget(0.01, 4) == 10 ** 8
    with pytest.raises(ValueError):
        balance_budget(0.1, 0)
    with pytest.raises(ValueError):
        balance_budget(0.1, 4, None, "sc")


def test_estimator_spec_validation():
    EstimatorSpec("two_level_mc", 10, 5)
    with pytest.raises(ValueError):
        EstimatorSpec("mc", 0)
    with pytest.raises(ValueError):
        EstimatorSpec("qmc")


def test_fit_rate_and_l2_norm():
    n = np.array([10, 100, 1000])
    rate, r2 = fit_rate(n, 3 * n ** -0.5)
    assert rate == pytest.approx(0.5) and r2 == pytest.approx(1.0)
    g = StructuredGrid(4, 4, 0, 1, 0, 2)
    assert l2_norm(g, np.ones(g.n_nodes)) == pytest.approx(np.sqrt(2.0))


@given(seed=st.integers(0, 2 ** 31), n=st.integers(1, 12), batch=st.integers(1, 6))
def test_property_mc_seed_determinism(seed, n, batch):
    a = run_mc(n, toy_sampler, SQUARE, seed=seed, batch=batch)
    b = run_mc(n, toy_sampler, SQUARE, seed=seed, batch=64, workers=2)
    np.testing.assert_array_equal(a.mean, b.mean)
    assert a.variance.min() >= -1e-12
