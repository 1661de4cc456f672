import math

import numpy as np
import pytest

from maxentcert.dual import (DualSolution, SolverOptions, active_threshold, density_at,
                             dual_gradient, dual_objective, initial_multipliers, sample, solve)
from maxentcert.errors import (AcceptanceRateCollapse, DimensionMismatch, DivergentPartition,
                               NoExistenceRoute, NotConverged)
from maxentcert.measurements import (IndicatorComplement, MomentProblem, NormPower, PowerMoment,
                                     QuadraticForm, Scaled, equality_constraint)
from maxentcert.oracle import fixture
from maxentcert.quadrature import IntegrationRequest, integrate
from maxentcert.support import SupportSet

R1 = SupportSet.full(1)
RAY = SupportSet.box([0.0], [np.inf])
X = PowerMoment(1, absolute=False)
EXP = MomentProblem(RAY, [(X, 1.0)], require_bounded_below=False)
GAUSS = MomentProblem(R1, [(PowerMoment(2), 1.0)])
LAPLACE = MomentProblem(R1, [(PowerMoment(1), 1.0)])
INACTIVE = MomentProblem(SupportSet.box([-10.0], [10.0]), [(PowerMoment(2), 200.0)])
HALF_LN_2PI = 0.5 * math.log(2 * math.pi)


# objective and gradient ---------------------------------------------------

@pytest.mark.parametrize("problem,lam,expected", [
    (EXP, 1.0, 1.0),
    (EXP, 2.0, 2.0 - math.log(2.0)),
    (GAUSS, 0.5, HALF_LN_2PI + 0.5),
])
def test_dual_objective_examples(problem, lam, expected):
    assert dual_objective(problem, [lam]) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("problem,lam,expected", [
    (EXP, 1.0, 0.0), (EXP, 2.0, 0.5), (GAUSS, 0.5, 0.0),
])
def test_dual_gradient_examples(problem, lam, expected):
    assert dual_gradient(problem, [lam])[0] == pytest.approx(expected, abs=1e-10)


def test_objective_rejects_negative_lambda():
    with pytest.raises(ValueError):
        dual_objective(EXP, [-0.1])
    with pytest.raises(ValueError):
        dual_gradient(EXP, [1.0, 2.0])


def test_objective_propagates_divergence():
    with pytest.raises(DivergentPartition):
        dual_objective(GAUSS, [0.0])


def test_gradient_matches_finite_differences_two_constraints():
    P = MomentProblem(R1, [(PowerMoment(2), 2.0), (PowerMoment(1), 0.9)])
    lam = np.array([0.4, 0.7])
    g = dual_gradient(P, lam)
    for j in range(2):
        h = 1e-5
        e = np.zeros(2)
        e[j] = h
        fd = (dual_objective(P, lam + e) - dual_objective(P, lam - e)) / (2 * h)
        assert abs(fd - g[j]) <= 1e-4 * max(abs(g[j]), 1e-2)


# solve --------------------------------------------------------------------

def test_solve_exponential():
    s = solve(EXP)
    assert s.converged
    assert s.lambda_[0] == pytest.approx(1.0, abs=1e-6)
    assert s.alpha == pytest.approx(0.0, abs=1e-8)
    assert s.entropy == pytest.approx(1.0, abs=1e-8)
    assert s.active_set.tolist() == [True]


def test_solve_gaussian():
    s = solve(GAUSS)
    assert s.lambda_[0] == pytest.approx(0.5, abs=1e-6)
    assert s.alpha == pytest.approx(HALF_LN_2PI, abs=1e-8)
    assert s.entropy == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-8)


def test_solve_inactive_constraint():
    s = solve(INACTIVE)
    assert s.lambda_[0] < 1e-6
    assert s.entropy == pytest.approx(math.log(20.0), abs=1e-6)
    assert s.fitted_moments[0] == pytest.approx(100.0 / 3.0, rel=1e-8)
    assert s.active_set.tolist() == [False]


@pytest.mark.parametrize("mean", [0.01, 0.3, 5.0, 40.0])
def test_solve_exponential_far_from_start(mean):
    P = MomentProblem(RAY, [(X, mean)], require_bounded_below=False)
    s = solve(P)
    assert s.converged
    assert s.lambda_[0] == pytest.approx(1 / mean, rel=1e-6)
    assert s.entropy == pytest.approx(1 + math.log(mean), abs=1e-6)


def test_solve_mixed_active_and_inactive():
    P = MomentProblem(R1, [(PowerMoment(1), 0.5), (PowerMoment(2), 1.0)])
    s = solve(P)
    assert s.lambda_ == pytest.approx([2.0, 0.0], abs=1e-6)
    assert s.active_set.tolist() == [True, False]
    assert s.fitted_moments[1] == pytest.approx(0.5, rel=1e-6)
    assert s.entropy == pytest.approx(1.0, abs=1e-6)


def test_solve_equality_constraints_forced():
    cons = equality_constraint(X, 1.0) + [(PowerMoment(2), 2.0)]
    P = MomentProblem(R1, cons, require_bounded_below=False)
    with pytest.raises(NoExistenceRoute):
        solve(P)
    s = solve(P, force=True)
    assert s.converged
    assert s.lambda_[1] - s.lambda_[0] == pytest.approx(1.0, abs=1e-5)
    assert s.lambda_[2] == pytest.approx(0.5, abs=1e-6)
    assert s.entropy == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-6)


def test_solve_two_dimensional_product():
    P = MomentProblem(SupportSet.full(2), [(PowerMoment(2, 0, 2), 1.0), (PowerMoment(2, 1, 2), 4.0)])
    s = solve(P)
    assert s.lambda_ == pytest.approx([0.5, 0.125], rel=1e-5)
    h = 0.5 * math.log(2 * math.pi * math.e) * 2 + math.log(2.0)
    assert s.entropy == pytest.approx(h, abs=1e-6)


def test_solve_correlated_quadratic():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    s = solve(MomentProblem(SupportSet.full(2), [(QuadraticForm(Q), 2.0)]))
    # E[x^T Q x] = 2 gives covariance (2 lambda Q)^-1 with lambda = d / (2 u) = 0.5
    assert s.lambda_[0] == pytest.approx(0.5, rel=1e-6)
    cov = np.linalg.inv(2 * 0.5 * Q)
    h = 0.5 * math.log((2 * math.pi * math.e) ** 2 * np.linalg.det(cov))
    assert s.entropy == pytest.approx(h, abs=1e-6)


def test_solve_indicator_constraint():
    P = MomentProblem(SupportSet.box([-5.0], [5.0]), [(IndicatorComplement([-1.0], [1.0]), 0.1)])
    s = solve(P)
    assert s.lambda_[0] == pytest.approx(math.log(36.0), rel=1e-6)


def test_solve_without_route_raises():
    P = MomentProblem(R1, [(X, 1.0)], require_bounded_below=False)
    with pytest.raises(NoExistenceRoute):
        solve(P)


def test_forced_solve_divergent_start():
    P = MomentProblem(R1, [(X, 1.0)], require_bounded_below=False)
    with pytest.raises(DivergentPartition, match="stabilizing"):
        solve(P, force=True)


def test_not_converged_returns_best_iterate_or_raises():
    P = MomentProblem(RAY, [(X, 7.0)], require_bounded_below=False)
    s = solve(P, SolverOptions(max_iter=1))
    assert not s.converged
    assert s.warnings
    assert s.lambda_[0] >= 0
    with pytest.raises(NotConverged) as info:
        solve(P, SolverOptions(max_iter=1, raise_on_failure=True))
    assert info.value.solution is not None


def test_uniform_without_constraints():
    s = solve(MomentProblem(SupportSet.box([0.0], [2.0]), []))
    assert s.lambda_.size == 0
    assert s.entropy == pytest.approx(math.log(2.0))


def test_initial_multipliers():
    P = MomentProblem(R1, [(PowerMoment(2), 1.0), (X, 1.0)], require_bounded_below=False)
    assert initial_multipliers(P).tolist() == [1.0, 1e-3]


def test_solution_is_immutable_and_summarizes():
    s = solve(EXP)
    with pytest.raises(ValueError):
        s.lambda_[0] = 3.0
    summary = s.summary()
    assert summary["lambda"] == [float(s.lambda_[0])]
    assert s.trace and s.trace[-1].grad_norm < 1e-8


def test_solve_is_deterministic():
    P = MomentProblem(R1, [(PowerMoment(2), 3.0), (PowerMoment(1), 1.2)])
    a, b = solve(P), solve(P)
    assert a.lambda_.tolist() == b.lambda_.tolist()
    assert a.entropy == b.entropy


def test_active_threshold():
    assert active_threshold([0.0]) == pytest.approx(1e-8)
    assert active_threshold([100.0]) == pytest.approx(1e-8 * 101)


def test_from_multipliers_matches_solve():
    s = solve(GAUSS)
    t = DualSolution.from_multipliers(GAUSS, s.lambda_)
    assert t.entropy == pytest.approx(s.entropy, abs=1e-10)


# density and sampling -----------------------------------------------------

def test_density_examples():
    s = solve(EXP)
    assert density_at(s, EXP, [0.0]) == pytest.approx(1.0, abs=1e-8)
    assert density_at(s, EXP, [-1.0]) == 0.0
    g = solve(GAUSS)
    assert density_at(g, GAUSS, [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-8)
    with pytest.raises(DimensionMismatch):
        density_at(g, GAUSS, [0.0, 1.0])


def test_sample_exponential_mean():
    s = solve(EXP)
    pts = sample(s, EXP, 100_000, seed=1)
    assert pts.shape == (100_000, 1)
    assert pts.min() >= 0
    assert pts.mean() == pytest.approx(1.0, abs=0.02)


def test_sample_gaussian_second_moment():
    s = solve(GAUSS)
    pts = sample(s, GAUSS, 100_000, seed=2)
    assert (pts ** 2).mean() == pytest.approx(1.0, abs=0.02)


def test_sample_bounded_support_and_two_dimensions():
    s = solve(INACTIVE)
    pts = sample(s, INACTIVE, 20_000, seed=0)
    assert np.all(np.abs(pts) <= 10)
    assert pts.mean() == pytest.approx(0.0, abs=0.2)
    P = MomentProblem(SupportSet.full(2), [(NormPower(2, dim=2), 2.0)])
    s2 = solve(P)
    pts = sample(s2, P, 20_000, seed=0)
    assert (pts ** 2).sum(axis=1).mean() == pytest.approx(2.0, abs=0.06)


def test_sample_determinism():
    s = solve(GAUSS)
    a = sample(s, GAUSS, 1, seed=9)
    b = sample(s, GAUSS, 1, seed=9)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample(s, GAUSS, 0)


def test_sample_acceptance_collapse():
    # a hand-made, badly mismatched density: extremely narrow spike on a wide box
    P = MomentProblem(SupportSet.box([-1e6], [1e6]), [(PowerMoment(2), 1e-12)])
    s = DualSolution.from_multipliers(P, [5e11])
    with pytest.raises(AcceptanceRateCollapse):
        sample(s, P, 10, seed=0)


# invariants ---------------------------------------------------------------

def test_entropy_identity_on_solutions():
    for P in (EXP, GAUSS, LAPLACE, INACTIVE):
        s = solve(P)
        tol = 1e-8
        assert abs(s.entropy - (s.alpha + s.lambda_ @ s.fitted_moments)) < 10 * tol
        if s.active_set.all():
            assert abs(s.entropy - (s.alpha + s.lambda_ @ P.bounds)) < 10 * tol


def test_inactive_constraint_monotonicity():
    s = solve(INACTIVE)
    t = solve(INACTIVE.with_bound(0, 400.0))
    assert abs(s.lambda_[0] - t.lambda_[0]) < 1e-7
    assert abs(s.entropy - t.entropy) < 1e-7


def test_active_bound_injectivity():
    a = solve(MomentProblem(RAY, [(X, 2.0)], require_bounded_below=False))
    b = solve(MomentProblem(RAY, [(X, 2.0 + 1e-12)], require_bounded_below=False))
    assert np.allclose(a.lambda_, b.lambda_, rtol=1e-6)
    assert np.allclose(a.fitted_moments, b.fitted_moments, atol=1e-6)


@pytest.mark.parametrize("problem", [GAUSS, LAPLACE])
def test_entropy_upper_bound_for_well_behaved(problem):
    s = solve(problem)
    phi, u = problem.constraints[0]
    assert phi.is_well_behaved
    res = integrate(IntegrationRequest(SupportSet.full(phi.dim), ((1.0, phi),)))
    assert s.entropy <= u + math.log(res.value) + 1e-6


def test_fixture_inactive_quadratic_lookup():
    fx = fixture("inactive-quadratic")
    assert fx.entropy_true == pytest.approx(math.log(20.0))
