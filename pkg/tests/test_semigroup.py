import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdelab.drift import PolynomialReaction, pointwise, sine_b
from spdelab.semigroup import (bismut_elworthy_derivative, bounded_composite, chapman_kolmogorov,
                               estimate_Pt, estimate_resolvent, mode_coefficient, point_value,
                               simpson_weights, sup_norm, vectorial_Pt)
from spdelab.solver import Equation
from spdelab.spectral import GridSpec, build_operator

OP = build_operator(GridSpec(33, "dirichlet", 8))
X = np.sin(np.pi * OP.nodes)
C1 = float(OP.project(X)[0])          # <x, e_1> = 1/sqrt(2)
MU1 = -np.pi**2


def test_functionals_on_known_fields():
    assert mode_coefficient(1)(OP, X) == pytest.approx(1 / np.sqrt(2), rel=1e-12)
    assert sup_norm()(OP, np.stack([X, -2 * X])).tolist() == pytest.approx([1.0, 2.0])
    assert point_value(0.5)(OP, X) == pytest.approx(1.0)
    phi = bounded_composite("tanh", 1, 0.5)
    assert phi(OP, X) == pytest.approx(np.tanh(np.sqrt(2)), rel=1e-12)
    assert phi.bound == 1.0 and phi.lipschitz_h == 2.0


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 40).map(lambda k: 2 * k), h=st.floats(1e-3, 1.0))
def test_simpson_integrates_cubics_exactly(n, h):
    t = h * np.arange(n + 1)
    w = simpson_weights(n, h)
    L = n * h
    assert np.dot(w, 1 + t - 3 * t**3) == pytest.approx(L + L**2 / 2 - 0.75 * L**4, rel=1e-10,
                                                        abs=1e-12)


def test_simpson_rejects_odd_intervals():
    with pytest.raises(ValueError):
        simpson_weights(3, 0.1)


def test_linear_mean_matches_closed_form():
    r = estimate_Pt(Equation(OP), mode_coefficient(1), X, 0.05, 2000, dt=1e-2 / 2)
    assert abs(r.mean - np.exp(MU1 * 0.05) * C1) <= 3 * r.stderr
    assert estimate_Pt(Equation(OP), mode_coefficient(1), X, 0.0, 10, dt=0.01).mean == \
        pytest.approx(C1)


def test_estimates_are_worker_independent():
    eq = Equation(OP, PolynomialReaction.cubic())
    phi = bounded_composite("sin", 2)
    a = estimate_Pt(eq, phi, 2 * X, 0.1, 700, dt=1e-2, seed=3, workers=1)
    b = estimate_Pt(eq, phi, 2 * X, 0.1, 700, dt=1e-2, seed=3, workers=4)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)


def test_contraction_for_bounded_phi():
    eq = Equation(OP, PolynomialReaction.cubic(), pointwise(sine_b(1.0)))
    r = estimate_Pt(eq, bounded_composite("sign", 1), 3 * X, 0.1, 500, dt=1e-2)
    assert abs(r.mean) <= 1.0


def test_vectorial_estimate_of_drift():
    eq = Equation(OP)
    B = pointwise(sine_b(1.0))
    r = vectorial_Pt(eq, B, X, 0.02, 300, dt=1e-2)
    assert r.mean.shape == (33,) and np.all(np.abs(r.mean) <= 1.0)
    assert np.array_equal(vectorial_Pt(eq, B, X, 0.0, 5, dt=0.01).mean, B(X, OP.nodes))


def test_derivative_linear_case_closed_form():
    # continuum: D P_t <., e_1> (x) e_1 = e^{mu_1 t}. The scheme's exact expectation
    # replaces one factor e^{mu_1 dt} by phi_1(mu_1 dt) in the Ito correlation.
    t, dt = 0.05, 5e-3
    n = int(round(t / dt))
    discrete = n * np.exp(MU1 * (n - 1) * dt) * np.expm1(MU1 * dt) / MU1 / t
    assert discrete == pytest.approx(np.exp(MU1 * t), rel=0.03)
    r = bismut_elworthy_derivative(Equation(OP), mode_coefficient(1), X, OP.mode(1), t, 4000,
                                   dt=dt, seed=2)
    assert abs(r.mean - discrete) <= 3 * r.stderr


def test_derivative_rejects_drift_and_zero_direction():
    eq = Equation(OP, drift=pointwise(sine_b(1.0)))
    with pytest.raises(ValueError):
        bismut_elworthy_derivative(eq, mode_coefficient(1), X, OP.mode(1), 0.1, 10, dt=0.01)
    with pytest.raises(ValueError):
        bismut_elworthy_derivative(Equation(OP), mode_coefficient(1), X, 0 * X, 0.1, 10, dt=0.01)


def test_resolvent_closed_form_linear():
    lam = 5.0
    rr = estimate_resolvent(Equation(OP), mode_coefficient(1), X, lam, 1000, dt=1e-2, tol=1e-4,
                            phi_bound=C1, seed=2)
    assert abs(rr.result.mean - C1 / (lam + np.pi**2)) <= rr.error_budget
    assert rr.tail_bound <= 1e-4


def test_resolvent_needs_bound_for_unbounded_phi():
    with pytest.raises(ValueError):
        estimate_resolvent(Equation(OP), mode_coefficient(1), X, 1.0, 10, dt=0.01)
    with pytest.raises(ValueError):
        estimate_resolvent(Equation(OP), bounded_composite("tanh", 1), X, 0.0, 10, dt=0.01)


def test_chapman_kolmogorov_agreement():
    eq = Equation(OP, PolynomialReaction.cubic())
    phi = bounded_composite("tanh", 1)
    direct, staged = chapman_kolmogorov(eq, phi, 2 * X, 0.05, 0.05, 2000, dt=1e-2 / 2, seed=4)
    assert abs(direct.mean - staged.mean) <= 3 * np.hypot(direct.stderr, staged.stderr)
