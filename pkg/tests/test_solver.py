import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdelab.drift import BlowUp, PolynomialReaction, point_eval, power_b, running_max
from spdelab.noise import NoisePath, NoisePathSpec, stochastic_convolution
from spdelab.solver import (Equation, SolverConfig, first_variation, moment_estimates,
                            simulate_ensemble, solve_mild, variation_of_constants_check)
from spdelab.spectral import GridSpec, apply_semigroup, build_operator

OP = build_operator(GridSpec(33, "dirichlet", 16))
X0 = np.sin(np.pi * OP.nodes)


def test_linear_equation_is_semigroup_plus_convolution():
    cfg = SolverConfig(1e-3, 0.05, record_stride=10)
    path = NoisePath(NoisePathSpec(4, 1e-3, 50, 16))
    traj = solve_mild(Equation(OP), X0, path, cfg)
    conv = stochastic_convolution(OP, path)
    for t, state in zip(traj.times, traj.states):
        j = int(round(t / 1e-3))
        assert np.max(np.abs(state - apply_semigroup(OP, t, X0) - conv.states[j])) < 1e-12


def test_linear_rate_is_folded_exactly():
    traj = solve_mild(Equation(OP, PolynomialReaction.linear(-1.0)), X0, None,
                      SolverConfig(0.1, 1.0))
    expected = np.exp(-(np.pi**2 + 1) * traj.times)[:, None] * X0
    assert np.max(np.abs(traj.states - expected)) < 1e-13


def test_recording_grid():
    traj = solve_mild(Equation(OP), X0, None, SolverConfig(1e-3, 0.0105 - 0.0005,
                                                           record_stride=4))
    assert np.allclose(traj.times, [0, 0.004, 0.008, 0.01])
    assert traj.at(0.008).shape == (33,)
    with pytest.raises(KeyError):
        traj.at(0.005)


@pytest.mark.parametrize("kw", [dict(dt=0), dict(T=-1), dict(dt=0.3, T=1.0),
                                dict(record_stride=0), dict(scheme="rk4")])
def test_solver_config_validation(kw):
    base = dict(dt=0.1, T=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        SolverConfig(**base)


def test_noise_step_mismatch_is_rejected():
    path = NoisePath(NoisePathSpec(1, 2e-3, 50, 16))
    with pytest.raises(ValueError):
        solve_mild(Equation(OP), X0, path, SolverConfig(1e-3, 0.05))


def test_blow_up_reports_time_and_sample():
    eq = Equation(OP, PolynomialReaction.cubic())
    with pytest.raises(BlowUp) as info:
        simulate_ensemble(eq, 5 * X0, SolverConfig(1e-3, 0.01, blow_up_threshold=2.0), 4, 1)
    # the first step already leaves the ball of radius 2
    assert info.value.t == 0.001 and info.value.sample == 0


def test_ensemble_is_independent_of_workers_and_batching_offsets():
    eq = Equation(OP, PolynomialReaction.cubic(), running_max(power_b(0.5)))
    cfg = SolverConfig(1e-3, 0.02, record_stride=5)
    one = simulate_ensemble(eq, X0, cfg, 300, 11, workers=1)
    three = simulate_ensemble(eq, X0, cfg, 300, 11, workers=3)
    assert one.states.tobytes() == three.states.tobytes()
    # sample i only depends on (seed, i)
    small = simulate_ensemble(eq, X0, cfg, 5, 11)
    assert np.allclose(small.states, one.states[:5], rtol=0, atol=1e-14)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**32), amp=st.floats(0.5, 3.0))
def test_first_variation_matches_finite_difference(seed, amp):
    eq = Equation(OP, PolynomialReaction.cubic())
    cfg = SolverConfig(1e-3, 0.05)
    path = NoisePath(NoisePathSpec(seed, 1e-3, 50, 16))
    h = OP.mode(2)
    base = solve_mild(eq, amp * X0, path, cfg)
    eps = 1e-5
    fd = (solve_mild(eq, amp * X0 + eps * h, path, cfg).final - base.final) / eps
    eta = first_variation(eq, base, h).final
    assert OP.h_norm(fd - eta) <= 1e-3 * OP.h_norm(eta)


def test_first_variation_is_linear_in_direction():
    eq = Equation(OP, PolynomialReaction.cubic())
    base = solve_mild(eq, X0, NoisePath(NoisePathSpec(2, 1e-3, 20, 16)), SolverConfig(1e-3, 0.02))
    etas = first_variation(eq, base, OP.basis[:3]).final
    combo = first_variation(eq, base, OP.basis[0] - 2 * OP.basis[2]).final
    assert np.allclose(combo, etas[0] - 2 * etas[2], atol=1e-13)


def test_variation_of_constants_exact_for_linear_part():
    # with F = 0 the flow derivative does not depend on the base point
    eq = Equation(OP, PolynomialReaction.zero(), point_eval(power_b(0.5), 0.5, X0))
    path = NoisePath(NoisePathSpec(8, 1e-3, 50, 16))
    rep = variation_of_constants_check(eq, X0, path, SolverConfig(1e-3, 0.05))
    assert rep.sup_h < 1e-13


def test_variation_of_constants_residual_shrinks_with_dt():
    eq = Equation(OP, PolynomialReaction.cubic(), point_eval(power_b(0.5), 0.5, X0))
    res = []
    for lev in range(3):
        path = NoisePath(NoisePathSpec(5, 4e-3, 25, 16, lev, 2))
        res.append(variation_of_constants_check(eq, X0, path,
                                                SolverConfig(4e-3 / 2**lev, 0.1)).sup_h)
    assert res[0] > res[1] > res[2]


def test_moment_estimates_on_shared_seeds():
    eq = Equation(OP, PolynomialReaction.cubic())
    cfg = SolverConfig(1e-3, 0.05, record_stride=10)
    ens = [simulate_ensemble(eq, a * X0, cfg, 100, 1) for a in (1.0, 4.0)]
    rep = moment_estimates(OP, ens, (1, 2), 0.05, [(0, 1)])
    assert np.allclose(rep.x0_sup_norms, [1.0, 4.0])
    assert np.all(rep.sup_moments[2] >= rep.sup_moments[1] ** 2)
    # cubic F is one-sided Lipschitz with rho = 0: shared-noise paths never separate
    assert rep.lipschitz_ratios[0] <= 1 + 1e-12
    with pytest.raises(ValueError):
        moment_estimates(OP, [simulate_ensemble(eq, X0, cfg, 10, 1)])


def test_batched_first_variation_shape():
    eq = Equation(OP, PolynomialReaction.cubic())
    base = solve_mild(eq, X0, None, SolverConfig(1e-3, 0.01))
    etas = first_variation(eq, base, OP.basis[:4])
    assert etas.states.shape == (4, 11, 33) and etas.final.shape == (4, 33)
