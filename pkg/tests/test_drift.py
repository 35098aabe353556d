import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spdelab.drift import (PolynomialReaction, bump_samples, dist_z_b, empirical_holder_seminorm,
                           fejer_projection, fejer_weights, mollification_radius_bound,
                           mollified, mollify_drift, point_eval, pointwise, power_b, prefix_max,
                           running_max, running_max_abs, sine_b)
from spdelab.spectral import GridSpec, build_operator

OP = build_operator(GridSpec(33, "dirichlet", 16))
reals = st.floats(-50, 50, allow_nan=False)
fields = arrays(np.float64, 33, elements=st.floats(-5, 5, allow_nan=False))


@pytest.mark.parametrize("b", [sine_b(1.5), power_b(0.5), power_b(1.0), dist_z_b(0.3)],
                         ids=lambda b: f"{b.name}{b.params}")
@settings(max_examples=200, deadline=None)
@given(s=reals, t=reals)
def test_scalar_holder_and_sup_bounds(b, s, t):
    assert abs(b(s)) <= b.bound + 1e-15
    assume(s != t)
    assert abs(b(s) - b(t)) <= b.M * abs(s - t) ** b.alpha * (1 + 1e-12) + 1e-15


@settings(max_examples=200, deadline=None)
@given(x=fields, y=fields)
def test_max_inequality(x, y):
    lhs = np.abs(prefix_max(x) - prefix_max(y))
    assert np.all(lhs <= prefix_max(np.abs(x - y)))


def test_drift_variants_frozen_values():
    x = np.array([0.0, 0.25, -1.0, 0.5, 0.04])
    nodes = np.linspace(0, 1, 5)
    b = power_b(0.5)
    assert running_max(b)(x).tolist() == pytest.approx([0, 0.5, 0.5, 0.5 ** 0.5, 0.5 ** 0.5])
    assert running_max_abs(b)(x).tolist() == pytest.approx([0, 0.5, 1, 1, 1])
    assert pointwise(b)(x).tolist() == pytest.approx([0, 0.5, -1, 0.5 ** 0.5, 0.2])
    g = np.arange(5.0)
    # x(0.5) = -1 exactly at a node
    assert point_eval(b, 0.5, g)(x, nodes).tolist() == pytest.approx((-g).tolist())
    # linear interpolation between nodes: x(0.625) = -0.25
    assert point_eval(b, 0.625, g)(x, nodes).tolist() == pytest.approx((-0.5 * g).tolist())


def test_drift_seminorm_bounds_on_random_pairs():
    rng = np.random.default_rng(3)
    pairs = [(x, x + 10.0 ** rng.uniform(-4, 0) * rng.standard_normal(33))
             for x in rng.standard_normal((30, 33))]
    g = np.sin(np.pi * OP.nodes)
    for B in (point_eval(sine_b(1.0), 0.3, g), running_max(power_b(0.5)),
              running_max_abs(dist_z_b(0.5)), pointwise(power_b(0.7))):
        s = empirical_holder_seminorm(lambda z: B(z, OP.nodes), pairs, B.holder_alpha)
        assert s <= B.holder_bound * (1 + 1e-12)


def test_cubic_reaction_properties():
    F = PolynomialReaction.cubic()
    s = np.linspace(-3, 3, 61)
    assert np.array_equal(F(-s), -F(s))
    assert F.rho == 0.0
    a, gamma, c = F.dissipativity_constants()
    assert (a, gamma) == (0.5, 4.0)
    # max of -3 l^2 + 3 l^3 - l^4 / 2 at l = (9 + sqrt 33) / 4, times the 1.1 margin
    lam = (9 + np.sqrt(33)) / 4
    assert c == pytest.approx(1.1 * (-3 * lam**2 + 3 * lam**3 - lam**4 / 2), rel=2e-3)


def test_linear_reaction_rate_and_rho():
    F = PolynomialReaction.linear(-2.5)
    assert F.linear_rate == -2.5 and F.rho == -2.5
    assert F(np.array([2.0])).tolist() == [-5.0]


def test_reaction_rejects_non_dissipative_leading_term():
    with pytest.raises(ValueError):
        PolynomialReaction.cubic(alpha=-1.0)


def test_fejer_weights_and_single_mode():
    assert fejer_weights(4).tolist() == [1.0, 0.75, 0.5, 0.25]
    for k in (1, 3, 8):
        assert np.allclose(fejer_projection(OP, 8, OP.mode(k)), (9 - k) / 8 * OP.mode(k))
    assert np.allclose(fejer_projection(OP, 8, OP.mode(10)), 0)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(1, 16), seed=st.integers(0, 2**32))
def test_fejer_projection_nearly_sup_contractive(m, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(16) / np.arange(1, 17) @ OP.basis
    assert np.max(np.abs(fejer_projection(OP, m, x))) <= 1.1 * np.max(np.abs(x))


@pytest.mark.parametrize("m", [1, 4, 16])
def test_bump_samples_live_in_ball(m):
    xi = bump_samples(m, 2000, 7)
    r = np.linalg.norm(xi, axis=1)
    assert np.max(r) <= 1 / m**2 and np.min(r) >= 0
    assert np.array_equal(xi, bump_samples(m, 2000, 7))
    assert mollification_radius_bound(m) == pytest.approx(np.sqrt(2) * (m + 1) / (2 * m**2))


def test_mollified_drift_is_deterministic_and_matches_helper():
    B = running_max(power_b(0.5))
    Bm = mollified(B, OP, 8, 32, 5)
    x = np.sin(2 * np.pi * OP.nodes)
    assert np.array_equal(Bm(x), mollify_drift(B, OP, 8, x, 32, 5))
    # batched evaluation differs from single only by BLAS summation order
    assert np.allclose(Bm(np.stack([x, x]))[1], Bm(x), rtol=0, atol=1e-14)
    assert Bm.holder_bound == B.holder_bound and Bm.holder_alpha == 0.5
    with pytest.raises(ValueError):
        mollified(Bm, OP, 4)
    with pytest.raises(ValueError):
        mollified(B, OP, 17)


def test_mollified_drift_converges_on_smooth_field():
    B = pointwise(sine_b(1.0))
    x = 0.8 * OP.mode(1) / np.sqrt(2)
    gaps = [np.max(np.abs(mollify_drift(B, OP, m, x, 256, 0) - B(x))) for m in (4, 8, 16)]
    assert gaps[0] > gaps[1] > gaps[2]
