"""Monte Carlo estimators for transition semigroups, their derivatives and resolvents.

All estimators draw sample i from the noise seed ``derive_seed(seed, i)`` and
reduce per-sample values in sample order, so results do not depend on
``workers``. Comparisons between estimators (finite differences,
Chapman-Kolmogorov) reuse seeds to get common random numbers.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .noise import derive_seed
from .parallel import BATCH_SIZE, ensemble_noise, map_batches, mean_stderr, sample_seeds
from .solver import Equation, march
from .spectral import SpectralOperator, check_field


class TestFunctional:
    """Real functional phi(x) of a grid field, vectorized over leading axes."""

    __test__ = False  # not a pytest class

    def __init__(self, kind: str, fn: Callable, bound: float | None = None,
                 lipschitz_h: float | None = None, holder: tuple | None = None,
                 label: str = ""):
        self.kind = kind
        self._fn = fn
        self.bound = bound
        self.lipschitz_h = lipschitz_h
        self.holder = holder
        self.label = label or kind

    def __call__(self, op: SpectralOperator, x) -> np.ndarray:
        return self._fn(op, np.asarray(x, dtype=float))

    def __repr__(self):
        return f"TestFunctional({self.label})"


def _coef(op: SpectralOperator, x: np.ndarray, k: int) -> np.ndarray:
    return x @ (op.mode(k) * op.grid.weights)


def mode_coefficient(k: int) -> TestFunctional:
    """x -> <x, e_k>_H (linear, Lipschitz constant 1 in H, unbounded)."""
    return TestFunctional("mode", lambda op, x: _coef(op, x, k), None, 1.0, (1.0, 1.0),
                          f"mode({k})")


def sup_norm() -> TestFunctional:
    return TestFunctional("sup", lambda op, x: np.max(np.abs(x), axis=-1), None, None, None,
                          "sup")


def point_value(xi: float) -> TestFunctional:
    def fn(op, x):
        return np.array([np.interp(xi, op.nodes, row) for row in x.reshape(-1, x.shape[-1])]
                        ).reshape(x.shape[:-1])
    return TestFunctional("point", fn, None, None, None, f"point({xi})")


_MAPS = {"tanh": (np.tanh, 1.0, 1.0), "sin": (np.sin, 1.0, 1.0),
         "sign": (np.sign, 1.0, None)}


def bounded_composite(name: str, k: int, scale: float = 1.0) -> TestFunctional:
    """x -> map(<x, e_k> / scale) for map in {tanh, sin, sign}; bounded by 1.

    A small ``scale`` makes tanh an approximate sign function: still bounded,
    but with Lipschitz constant 1/scale.
    """
    fn, bound, lip = _MAPS[name]
    lip_h = None if lip is None else lip / scale
    return TestFunctional("composite", lambda op, x: fn(_coef(op, x, k) / scale), bound, lip_h,
                          None if lip_h is None else (1.0, lip_h), f"{name}(mode({k})/{scale:g})")


@dataclass(frozen=True)
class EstimatorResult:
    mean: float | np.ndarray
    stderr: float | np.ndarray
    n_samples: int
    seed: int
    wall_time: float = 0.0


def _steps(t: float, dt: float) -> int:
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"t={t} is not a multiple of dt={dt}")
    return n


def _run(eq: Equation, x, dt: float, n_steps: int, n: int, seed: int, workers: int,
         consume: Callable, directions=None, noise_modes: int | None = None,
         batch_size: int = BATCH_SIZE) -> list:
    """Run ``consume(march_stream, a, b)`` per batch of samples [a, b)."""
    x = check_field(eq.op, x)
    n_noise = noise_modes or eq.op.n_modes
    rates = eq.rates[:n_noise]

    def batch(a, b):
        ou, dw = ensemble_noise(sample_seeds(seed, a, b), dt, n_steps, rates)
        x0 = x[a:b] if x.ndim == 2 else np.broadcast_to(x, (b - a, x.shape[-1]))
        dirs = None
        if directions is not None:
            dirs = np.broadcast_to(directions, (b - a,) + np.shape(directions))
        stream = march(eq, x0, dt, n_steps, ou, np.inf, dirs, dw)
        return consume(stream, a, b)

    return map_batches(batch, n, workers, batch_size)


def _final_states(eq, x, t, n, dt, seed, workers, noise_modes=None) -> np.ndarray:
    n_steps = _steps(t, dt)

    def consume(stream, a, b):
        for j, xj, _, _ in stream:
            if j == n_steps:
                return xj.copy()

    return np.concatenate(_run(eq, x, dt, n_steps, n, seed, workers, consume,
                               noise_modes=noise_modes), axis=0)


def estimate_Pt(eq: Equation, phi: TestFunctional, x, t: float, n: int, *, dt: float,
                seed: int = 0, workers: int = 1, noise_modes: int | None = None) -> EstimatorResult:
    """E phi(X(t, x)); with a drift in ``eq`` this is the perturbed semigroup Q_t."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if n < 2:
        raise ValueError("need n >= 2 samples")
    start = time.perf_counter()
    x = check_field(eq.op, x)
    if t == 0:
        return EstimatorResult(float(phi(eq.op, x)), 0.0, n, seed, 0.0)
    vals = phi(eq.op, _final_states(eq, x, t, n, dt, seed, workers, noise_modes))
    mean, se = mean_stderr(vals)
    return EstimatorResult(float(mean), float(se), n, seed, time.perf_counter() - start)


def vectorial_Pt(eq: Equation, Phi: Callable, x, t: float, n: int, *, dt: float, seed: int = 0,
                 workers: int = 1) -> EstimatorResult:
    """Componentwise E Phi(X(t, x)) for a field-valued Phi (e.g. a HolderDrift)."""
    start = time.perf_counter()
    x = check_field(eq.op, x)
    if t == 0:
        val = Phi(x, eq.op.nodes)
        return EstimatorResult(val, np.zeros_like(val), n, seed, 0.0)
    vals = Phi(_final_states(eq, x, t, n, dt, seed, workers), eq.op.nodes)
    mean, se = mean_stderr(vals)
    return EstimatorResult(mean, se, n, seed, time.perf_counter() - start)


def _be_samples(eq: Equation, phi: TestFunctional, x, hs: np.ndarray, times: Sequence[float],
                n: int, dt: float, seed: int, workers: int) -> np.ndarray:
    """Per-sample Bismut-Elworthy values, shape (n, len(hs), len(times))."""
    if eq.drift is not None:
        raise ValueError("derivative formula needs a differentiable drift; remove B")
    steps = [_steps(t, dt) for t in times]
    if min(steps) < 1:
        raise ValueError("derivative needs t > 0")
    lookup = {s: i for i, s in enumerate(steps)}
    tarr = np.asarray(times, dtype=float)

    def consume(stream, a, b):
        out = np.empty((b - a, len(hs), len(steps)))
        for j, xj, _, ito in stream:
            if j in lookup:
                out[:, :, lookup[j]] = phi(eq.op, xj)[:, None] * ito / tarr[lookup[j]]
        return out

    return np.concatenate(_run(eq, x, dt, max(steps), n, seed, workers, consume, hs), axis=0)


def bismut_elworthy_derivative(eq: Equation, phi: TestFunctional, x, h, t: float, n: int, *,
                               dt: float, seed: int = 0, workers: int = 1) -> EstimatorResult:
    """<h, D P_t phi(x)> = (1/t) E[phi(X(t,x)) int_0^t <D_x X(s,x) h, dw(s)>_H]."""
    if not t > 0:
        raise ValueError("derivative needs t > 0")
    h = check_field(eq.op, h, "h")
    if not np.any(h):
        raise ValueError("direction h must be nonzero")
    start = time.perf_counter()
    vals = _be_samples(eq, phi, x, h[None], [t], n, dt, seed, workers)[:, 0, 0]
    mean, se = mean_stderr(vals)
    if se > abs(mean):
        warnings.warn(f"derivative estimate noisy: stderr {se:.3g} > |mean| {abs(mean):.3g}",
                      stacklevel=2)
    return EstimatorResult(float(mean), float(se), n, seed, time.perf_counter() - start)


def finite_difference_derivative(eq: Equation, phi: TestFunctional, x, h, t: float, n: int,
                                 eps: float, *, dt: float, seed: int = 0,
                                 workers: int = 1) -> EstimatorResult:
    """Centered (P_t phi(x+eps h) - P_t phi(x-eps h)) / 2 eps with common random numbers."""
    x = check_field(eq.op, x)
    h = check_field(eq.op, h, "h")
    start = time.perf_counter()
    plus = phi(eq.op, _final_states(eq, x + eps * h, t, n, dt, seed, workers))
    minus = phi(eq.op, _final_states(eq, x - eps * h, t, n, dt, seed, workers))
    mean, se = mean_stderr((plus - minus) / (2 * eps))
    return EstimatorResult(float(mean), float(se), n, seed, time.perf_counter() - start)


@dataclass(frozen=True)
class SmoothingFit:
    slope: float
    intercept: float
    times: np.ndarray
    norms: np.ndarray
    stderrs: np.ndarray


def smoothing_rate_fit(eq: Equation, phi: TestFunctional, x, times: Sequence[float], n: int,
                       hs: np.ndarray, *, dt: float, seed: int = 0, workers: int = 1,
                       max_rel_stderr: float = 0.3) -> SmoothingFit:
    """Log-log slope of max_h |<h, D P_t phi(x)>| / |h|_H against t (one shared ensemble)."""
    hs = np.atleast_2d(np.asarray(hs, dtype=float))
    hs = hs / eq.op.h_norm(hs)[:, None]
    vals = _be_samples(eq, phi, x, hs, times, n, dt, seed, workers)
    mean, se = mean_stderr(vals)              # (d, n_t)
    best = np.argmax(np.abs(mean), axis=0)
    cols = np.arange(len(times))
    norms = np.abs(mean[best, cols])
    errs = se[best, cols]
    if np.any(errs > max_rel_stderr * norms):
        raise ValueError(f"stderr exceeds {max_rel_stderr:.0%} of the estimate at some t; "
                         f"increase n or coarsen the t grid")
    slope, intercept = np.polyfit(np.log(times), np.log(norms), 1)
    return SmoothingFit(float(slope), float(intercept), np.asarray(times, dtype=float), norms, errs)


@dataclass(frozen=True)
class ResolventResult:
    result: EstimatorResult
    t_max: float
    tail_bound: float
    node_budget: float   # sum_j |w_j| stderr_j (conservative)

    @property
    def error_budget(self) -> float:
        return self.node_budget + self.tail_bound


def simpson_weights(n_intervals: int, h: float) -> np.ndarray:
    if n_intervals % 2:
        raise ValueError("Simpson's rule needs an even number of intervals")
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def estimate_resolvent(eq: Equation, phi: TestFunctional, x, lam: float, n: int, *, dt: float,
                       tol: float = 1e-3, t_max: float | None = None, seed: int = 0,
                       workers: int = 1, phi_bound: float | None = None) -> ResolventResult:
    """int_0^t_max e^{-lam t} P_t phi(x) dt by composite Simpson on the solver grid.

    Every quadrature node reuses the same trajectories; the truncation tail
    e^{-lam t_max} sup|phi| / lam enters the error budget.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    bound = phi.bound if phi_bound is None else phi_bound
    if bound is None:
        raise ValueError("tail bound needs sup|phi| (pass phi_bound for unbounded phi)")
    if t_max is None:
        t_needed = max(np.log(bound / (lam * tol)), 0.0) / lam
        t_max = 2 * dt * max(1, int(np.ceil(t_needed / (2 * dt))))
    tail = float(np.exp(-lam * t_max) * bound / lam)
    if tail > tol:
        raise ValueError(f"tail bound {tail:.3e} exceeds tolerance {tol:g}; raise t_max")
    n_steps = _steps(t_max, dt)
    w = simpson_weights(n_steps, dt) * np.exp(-lam * dt * np.arange(n_steps + 1))
    start = time.perf_counter()

    def consume(stream, a, b):
        acc = np.zeros(b - a)
        s1 = np.zeros(n_steps + 1)
        s2 = np.zeros(n_steps + 1)
        for j, xj, _, _ in stream:
            v = phi(eq.op, xj)
            acc += w[j] * v
            s1[j] = v.sum()
            s2[j] = (v * v).sum()
        return acc, s1, s2

    parts = _run(eq, x, dt, n_steps, n, seed, workers, consume)
    vals = np.concatenate([p[0] for p in parts])
    s1 = np.sum([p[1] for p in parts], axis=0)
    s2 = np.sum([p[2] for p in parts], axis=0)
    node_var = np.maximum(s2 - s1**2 / n, 0.0) / (n - 1)
    node_budget = float(np.sum(np.abs(w) * np.sqrt(node_var / n)))
    mean, se = mean_stderr(vals)
    res = EstimatorResult(float(mean), float(se), n, seed, time.perf_counter() - start)
    return ResolventResult(res, float(t_max), tail, node_budget)


def chapman_kolmogorov(eq: Equation, phi: TestFunctional, x, t1: float, t2: float, n: int, *,
                       dt: float, seed: int = 0, workers: int = 1):
    """(direct estimate at t1+t2, two-stage estimate restarted from time-t1 endpoints)."""
    direct = estimate_Pt(eq, phi, x, t1 + t2, n, dt=dt, seed=seed, workers=workers)
    mid = _final_states(eq, x, t1, n, dt, seed, workers)
    restart_seed = derive_seed(seed, 1 << 62)
    vals = phi(eq.op, _final_states(eq, mid, t2, n, dt, restart_seed, workers))
    mean, se = mean_stderr(vals)
    return direct, EstimatorResult(float(mean), float(se), n, restart_seed)
