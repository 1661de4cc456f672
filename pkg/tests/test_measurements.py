import math

import numpy as np
import pytest

from maxentcert.errors import DeclarationInconsistent, DimensionMismatch, NonFiniteInput, ProblemError
from maxentcert.measurements import (Callback, IndicatorComplement, LinearCombination, MomentProblem,
                                     NormPower, PowerMoment, QuadraticForm, Scaled, check_stable,
                                     check_well_behaved, combine_for_stability, equality_constraint,
                                     evaluate)
from maxentcert.support import SupportSet

R1 = SupportSet.full(1)
RAY = SupportSet.box([0.0], [np.inf])


# evaluate -----------------------------------------------------------------

def test_evaluate_norm_power_at_origin():
    assert evaluate(NormPower(2, dim=2), [0.0, 0.0]) == 0.0


def test_evaluate_power_moment():
    assert evaluate(PowerMoment(2), [3.0]) == 9.0


def test_evaluate_linear_combination():
    phi = LinearCombination([PowerMoment(2), PowerMoment(1)], [1.0, 2.0])
    assert evaluate(phi, [2.0]) == 8.0


def test_evaluate_rejects_bad_points():
    with pytest.raises(DimensionMismatch):
        evaluate(PowerMoment(2), [1.0, 2.0])
    with pytest.raises(NonFiniteInput):
        evaluate(PowerMoment(2), [math.nan])
    with pytest.raises(NonFiniteInput):
        evaluate(PowerMoment(2), [math.inf])


def test_evaluate_checks_declared_lower_bound():
    liar = Callback(lambda x: -5.0, lower_bound=0.0)
    with pytest.raises(DeclarationInconsistent):
        evaluate(liar, [1.0])


# attributes ---------------------------------------------------------------

def test_builtin_attributes():
    assert NormPower(2, dim=3).declared_stable
    assert PowerMoment(1).declared_stable
    signed = PowerMoment(1, absolute=False)
    assert signed.lower_bound == -math.inf and not signed.declared_stable
    assert signed.lower_bound_on(RAY) == 0.0
    assert not QuadraticForm([[1.0, 0.0], [0.0, 0.0]]).is_coercive
    assert QuadraticForm([[2.0, 0.5], [0.5, 1.0]]).declared_stable


def test_quadratic_form_must_be_psd():
    with pytest.raises(ProblemError):
        QuadraticForm([[1.0, 0.0], [0.0, -1.0]])


def test_indicator_values_are_zero_or_one():
    phi = IndicatorComplement([-1.0], [1.0])
    vals = phi(np.linspace(-3, 3, 101)[:, None])
    assert set(np.unique(vals)) <= {0.0, 1.0}
    assert phi(np.array([[1.0], [1.0001]])).tolist() == [0.0, 1.0]


def test_linear_combination_rejects_negative_weights():
    with pytest.raises(ProblemError):
        LinearCombination([PowerMoment(2), PowerMoment(1)], [1.0, -1.0])


def test_scaled_negation():
    neg = Scaled(PowerMoment(2), -1.0)
    assert neg.lower_bound == -math.inf
    assert neg(np.array([[3.0]]))[0] == -9.0


def test_equality_constraint_pair():
    pairs = equality_constraint(PowerMoment(1, absolute=False), 2.0)
    assert [u for _, u in pairs] == [2.0, -2.0]
    x = np.array([[1.5]])
    assert pairs[0][0](x)[0] == -pairs[1][0](x)[0]


# problem ------------------------------------------------------------------

def test_problem_requires_bounded_below_by_default():
    with pytest.raises(ProblemError):
        MomentProblem(R1, [(PowerMoment(1, absolute=False), 1.0)])
    P = MomentProblem(R1, [(PowerMoment(1, absolute=False), 1.0)], require_bounded_below=False)
    assert not P.bounded_below


def test_problem_admission_rules():
    with pytest.raises(ProblemError):
        MomentProblem(R1, [])
    assert MomentProblem(SupportSet.box([0], [2]), []).m == 0
    with pytest.raises(ProblemError):
        MomentProblem(R1, [(PowerMoment(2), math.inf)])
    with pytest.raises(DimensionMismatch):
        MomentProblem(R1, [(NormPower(2, dim=2), 1.0)])


def test_problem_lower_bounds_are_respected_on_samples():
    P = MomentProblem(SupportSet.full(2), [(NormPower(2, dim=2), 1.0),
                                          (QuadraticForm([[1.0, 0.2], [0.2, 1.0]]), 2.0),
                                          (IndicatorComplement([-1, -1], [1, 1]), 0.5)])
    X = P.sample_support(16_384, seed=1)
    F = P.features(X)
    assert np.all(F.min(axis=0) >= P.lower_bounds)
    assert P.uniform_lower_bound == 0.0


# stability ----------------------------------------------------------------

def test_check_stable_gaussian():
    rep = check_stable(NormPower(2, dim=1), R1, lambdas=[1.0])
    assert rep.stable and rep.path == "structural"
    assert rep.partition[1.0] == pytest.approx(math.sqrt(math.pi), rel=1e-9)


def test_check_stable_ray():
    rep = check_stable(PowerMoment(1, absolute=False), RAY, lambdas=[1.0])
    assert rep.stable and rep.path == "numerical"
    assert rep.partition[1.0] == pytest.approx(1.0, rel=1e-9)


def test_check_stable_linear_on_real_line():
    rep = check_stable(PowerMoment(1, absolute=False), R1, lambdas=[1.0])
    assert not rep.stable
    assert rep.verdicts[1.0] == "undetermined"


def test_check_stable_rejects_bad_lambdas():
    with pytest.raises(ValueError):
        check_stable(PowerMoment(2), R1, lambdas=[])
    with pytest.raises(ValueError):
        check_stable(PowerMoment(2), R1, lambdas=[0.0])


def test_structural_path_agrees_with_numerics_as_radius_doubles():
    from maxentcert.quadrature import IntegrationRequest, integrate
    for phi in (NormPower(2, dim=1), PowerMoment(1), NormPower(1, dim=1)):
        for lam in (0.1, 1.0, 10.0):
            req = IntegrationRequest(R1, ((lam, phi),), budget=100_000, target_rel_tol=1e-10)
            base = integrate(req)
            wider = integrate(IntegrationRequest(R1, ((lam, phi),), budget=100_000,
                                                 target_rel_tol=1e-10,
                                                 truncation_radius=2 * base.truncation_radius))
            assert abs(wider.value - base.value) <= 1e-6 * base.value


# well-behaved -------------------------------------------------------------

def test_well_behaved_norm_square():
    assert check_well_behaved(NormPower(2, dim=2)).consistent


def test_well_behaved_abs():
    assert check_well_behaved(PowerMoment(1)).consistent


def test_well_behaved_sine_is_inconsistent():
    sine = Callback(np.sin, vectorized=True, lower_bound=-1.0,
                    is_well_behaved=True, well_behaved_radius=1.0)
    with pytest.raises(DeclarationInconsistent):
        check_well_behaved(sine)
    rep = check_well_behaved(sine, strict=False)
    assert rep.violations


def test_well_behaved_needs_declaration():
    with pytest.raises(ValueError):
        check_well_behaved(IndicatorComplement([-1.0], [1.0]))


# combinations -------------------------------------------------------------

def test_combine_cancellation():
    x = PowerMoment(1, absolute=False)
    P = MomentProblem(R1, [(x, 1.0), (Scaled(x, -1.0), 2.0)], require_bounded_below=False)
    phi, u = combine_for_stability(P, [1.0, 1.0])
    assert u == 3.0
    assert np.all(phi(np.linspace(-5, 5, 11)[:, None]) == 0.0)


def test_combine_projection():
    P = MomentProblem(R1, [(PowerMoment(2), 1.0), (PowerMoment(1), 2.0)])
    phi, u = combine_for_stability(P, [1.0, 0.0])
    assert u == 1.0
    X = np.linspace(-3, 3, 7)[:, None]
    assert np.allclose(phi(X), X[:, 0] ** 2)


def test_combine_makes_well_behaved_sum():
    wiggle = Callback(lambda x: x * x - abs(x), lower_bound=-0.25)
    P = MomentProblem(R1, [(wiggle, 1.0), (PowerMoment(1), 1.0)])
    phi, u = combine_for_stability(P, [1.0, 1.0])
    assert u == 2.0
    X = np.linspace(-4, 4, 9)[:, None]
    assert np.allclose(phi(X), X[:, 0] ** 2)
    assert phi.is_well_behaved
    assert check_well_behaved(phi).consistent


def test_combine_errors():
    P = MomentProblem(R1, [(PowerMoment(2), 1.0), (PowerMoment(1), 2.0)])
    with pytest.raises(ProblemError):
        combine_for_stability(P, [1.0, -1.0])
    with pytest.raises(DimensionMismatch):
        combine_for_stability(P, [1.0])
    with pytest.raises(ProblemError):
        combine_for_stability(P, [0.0, 0.0])
