import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdelab.spectral import (GridSpec, apply_semigroup, build_operator, heat_kernel,
                              ultracontractive_norm)


@pytest.fixture(scope="module")
def dirichlet():
    return build_operator(GridSpec(65, "dirichlet", 32))


@pytest.fixture(scope="module")
def neumann():
    return build_operator(GridSpec(65, "neumann", 32))


def test_eigenvalues_match_laplacian(dirichlet, neumann):
    assert np.allclose(dirichlet.eigenvalues, -(np.pi * np.arange(1, 33)) ** 2)
    assert np.allclose(neumann.eigenvalues, -(np.pi * np.arange(0, 32)) ** 2)


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
def test_basis_orthonormal_under_quadrature(bc):
    op = build_operator(GridSpec(65, bc, 32))
    gram = op.inner(op.basis[:, None, :], op.basis[None, :, :])
    assert np.max(np.abs(gram - np.eye(32))) < 1e-12


def test_project_synthesize_roundtrip(dirichlet):
    c = np.random.default_rng(0).standard_normal(32)
    assert np.allclose(dirichlet.project(dirichlet.synthesize(c)), c, atol=1e-12)


def test_single_mode_decays_exactly(dirichlet):
    x = dirichlet.mode(3)
    y = apply_semigroup(dirichlet, 0.01, x)
    assert np.max(np.abs(y - np.exp(-9 * np.pi**2 * 0.01) * x)) < 1e-13


def test_neumann_constant_is_invariant(neumann):
    x = np.full(65, 2.5)
    assert np.max(np.abs(apply_semigroup(neumann, 3.0, x) - x)) < 1e-13


def test_heat_kernel_frozen_value(dirichlet):
    # K_t(1/2, 1/2) = 2 sum_k e^{-k^2 pi^2 t} sin^2(k pi / 2), t = 0.1
    k = np.arange(1, 200, 2)
    expected = 2 * np.sum(np.exp(-(k * np.pi) ** 2 * 0.1))
    K = heat_kernel(dirichlet, 0.1)
    diag = np.diag(K)
    assert diag[32] == pytest.approx(expected, rel=1e-10)
    assert expected == pytest.approx(0.7456932, rel=1e-6)
    assert diag[0] == 0.0 and diag[-1] == 0.0
    assert np.allclose(K, K.T, atol=1e-14)


def test_ultracontractive_norm_is_below_gaussian_bound(dirichlet):
    for t in (0.01, 0.1, 1.0):
        assert ultracontractive_norm(dirichlet, t) <= (4 * np.pi * t) ** -0.25 * (1 + 1e-6)


def test_rejects_too_many_modes():
    with pytest.raises(ValueError):
        build_operator(GridSpec(16, "dirichlet", 16))


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0, 0.5), s=st.floats(0, 0.5), seed=st.integers(0, 2**32 - 1))
def test_semigroup_law_property(dirichlet, t, s, seed):
    x = np.random.default_rng(seed).standard_normal(65)
    lhs = apply_semigroup(dirichlet, t, apply_semigroup(dirichlet, s, x))
    rhs = apply_semigroup(dirichlet, t + s, x)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(x)))


@settings(max_examples=30, deadline=None)
@given(t=st.floats(1e-4, 1.0), seed=st.integers(0, 2**32 - 1))
def test_semigroup_contracts_h_norm(dirichlet, t, seed):
    x = np.random.default_rng(seed).standard_normal(65)
    assert dirichlet.h_norm(apply_semigroup(dirichlet, t, x)) <= dirichlet.h_norm(x) + 1e-12
