"""Exponential-Euler mild solver, variation equations and related diagnostics.

One step of the scheme, in spectral coefficients c = P_M X,

    c_{j+1} = e^{L dt} c_j + phi_1(L dt) dt P_M N(X_j) + I_j,

where L = A + ell (ell is the spatially constant linear rate of f), N = F - ell
+ B is the remaining drift and I_j the exact OU increment of the noise path.
The first and second variations are the exact derivatives of this discrete map,
so finite differences of the solver agree with them up to O(eps).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .drift import BlowUp, HolderDrift, PolynomialReaction, apply_reaction_derivative
from .noise import NoisePath, NoisePathSpec, ou_coefficients
from .parallel import BATCH_SIZE, ensemble_noise, map_batches, sample_seeds
from .spectral import SpectralOperator, check_field


@dataclass(frozen=True, eq=False)
class Equation:
    """dX = [AX + F(X) + B(X)] dt + dw on the operator's spectral space."""

    op: SpectralOperator
    reaction: PolynomialReaction = field(default_factory=PolynomialReaction.zero)
    drift: HolderDrift | None = None

    @property
    def rates(self) -> np.ndarray:
        return self.op.eigenvalues + self.reaction.linear_rate

    def without_drift(self) -> "Equation":
        return replace(self, drift=None)

    def with_drift(self, drift: HolderDrift | None) -> "Equation":
        return replace(self, drift=drift)

    def nonlinear(self, x: np.ndarray) -> np.ndarray:
        ell = self.reaction.linear_rate
        out = self.reaction(x)
        if ell:
            out = out - ell * x
        if self.drift is not None:
            out = out + self.drift(x, self.op.nodes)
        return out

    def tangent_multiplier(self, x: np.ndarray) -> np.ndarray:
        """F'(x) - ell, the non-exponential part of the linearized drift."""
        return apply_reaction_derivative(self.reaction, x, 1) - self.reaction.linear_rate

    def describe(self) -> dict:
        g = self.op.grid
        return {
            "grid": {"n_points": g.n_points, "boundary": g.boundary.value, "n_modes": g.n_modes},
            "reaction": self.reaction.describe(),
            "drift": None if self.drift is None else self.drift.describe(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    scheme: str = "exponential_euler"
    blow_up_threshold: float = 1e6
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.T > 0:
            raise ValueError(f"T must be > 0, got {self.T}")
        if self.scheme != "exponential_euler":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.blow_up_threshold > 0:
            raise ValueError("blow_up_threshold must be > 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T/dt = {steps} is not an integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states; ``states`` has shape (..., len(times), n_points)."""

    times: np.ndarray
    states: np.ndarray
    dt: float
    stride: int = 1
    noise: NoisePathSpec | None = None
    model: str = ""

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, t):
            raise KeyError(f"time {t} not recorded")
        return self.states[..., i, :]

    @property
    def final(self) -> np.ndarray:
        return self.states[..., -1, :]


def _check_blowup(x: np.ndarray, t: float, threshold: float):
    norms = np.max(np.abs(x), axis=-1)
    bad = ~(norms <= threshold)
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise BlowUp(t, float(norms[idx]), int(idx[0]) if norms.ndim else None)


def march(eq: Equation, x0: np.ndarray, dt: float, n_steps: int, ou: np.ndarray | None = None,
          threshold: float = 1e6, directions: np.ndarray | None = None,
          dw: np.ndarray | None = None) -> Iterator[tuple]:
    """Yield ``(j, X_j, eta_j, ito_j)`` for j = 0..n_steps over a batch.

    x0: (b, N). ou, dw: (b, n_noise, n_steps) with n_noise <= n_modes.
    directions: (b, d, N) initial tangents, co-evolved by the first variation.
    ito_j: (b, d) running sums sum_{i<j} <eta_i, dW_i>_H (left-point rule).
    """
    op = eq.op
    decay, phi_h, _, _ = ou_coefficients(eq.rates, dt)
    x = np.array(x0, dtype=float)
    eta = None if directions is None else np.array(directions, dtype=float)
    ito = None if (eta is None or dw is None) else np.zeros(eta.shape[:-1])
    n_noise = 0 if ou is None else ou.shape[1]
    yield 0, x, eta, ito
    for j in range(n_steps):
        c = op.project(x) * decay + op.project(eq.nonlinear(x)) * phi_h
        if n_noise:
            c[..., :n_noise] += ou[..., j]
        if eta is not None:
            ce = op.project(eta)
            if ito is not None:
                ito = ito + np.einsum("bdk,bk->bd", ce[..., :n_noise], dw[..., j])
            mult = eq.tangent_multiplier(x)[:, None, :]
            eta = op.synthesize(ce * decay + op.project(mult * eta) * phi_h)
        x = op.synthesize(c)
        _check_blowup(x, (j + 1) * dt, threshold)
        yield j + 1, x, eta, ito


def _noise_for(eq: Equation, path: NoisePath | None, cfg: SolverConfig):
    if path is None:
        return None
    if path.n_modes > eq.op.n_modes:
        raise ValueError(f"noise path has {path.n_modes} modes, operator {eq.op.n_modes}")
    if abs(path.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise ValueError(f"noise step {path.dt} differs from solver step {cfg.dt}")
    if path.n_steps < cfg.n_steps:
        raise ValueError(f"noise horizon {path.dt * path.n_steps} shorter than T={cfg.T}")
    return path.ou_increments(eq.rates[: path.n_modes])[None, :, : cfg.n_steps]


def solve_mild(eq: Equation, x0, path: NoisePath | None, cfg: SolverConfig) -> Trajectory:
    """Exponential-Euler mild solution; ``path=None`` means zero noise."""
    x0 = check_field(eq.op, x0, "x0")
    ou = _noise_for(eq, path, cfg)
    times, states = [], []
    for j, x, _, _ in march(eq, x0[None], cfg.dt, cfg.n_steps, ou, cfg.blow_up_threshold):
        if j % cfg.record_stride == 0 or j == cfg.n_steps:
            times.append(j * cfg.dt)
            states.append(x[0])
    return Trajectory(np.array(times), np.array(states), cfg.dt, cfg.record_stride,
                      None if path is None else path.spec, eq.digest())


def simulate_ensemble(eq: Equation, x0, cfg: SolverConfig, n: int, seed: int, *,
                      noise_modes: int | None = None, workers: int = 1,
                      batch_size: int = BATCH_SIZE) -> Trajectory:
    """n independent solutions (sample i driven by seed derive_seed(seed, i))."""
    x0 = check_field(eq.op, x0, "x0")
    n_noise = noise_modes or eq.op.n_modes
    rates = eq.rates[:n_noise]

    def run(a, b):
        ou, _ = ensemble_noise(sample_seeds(seed, a, b), cfg.dt, cfg.n_steps, rates)
        rec = []
        try:
            for j, x, _, _ in march(eq, np.broadcast_to(x0, (b - a, x0.shape[-1])), cfg.dt,
                                    cfg.n_steps, ou, cfg.blow_up_threshold):
                if j % cfg.record_stride == 0 or j == cfg.n_steps:
                    rec.append(x)
        except BlowUp as exc:
            raise BlowUp(exc.t, exc.norm, a + (exc.sample or 0)) from None
        return np.stack(rec, axis=1)

    states = np.concatenate(map_batches(run, n, workers, batch_size), axis=0)
    steps = [j for j in range(cfg.n_steps + 1) if j % cfg.record_stride == 0 or j == cfg.n_steps]
    return Trajectory(cfg.dt * np.array(steps), states, cfg.dt, cfg.record_stride, None, eq.digest())


# ---------------------------------------------------------------------------
# variation equations


def _require_full(base: Trajectory):
    if base.stride != 1 or base.states.ndim != 2:
        raise ValueError("variation equations need a single trajectory recorded every step")


def _linear_flow(eq: Equation, states: np.ndarray, eta0: np.ndarray, dt: float,
                 source: np.ndarray | None = None) -> np.ndarray:
    """Exponential Euler for eta' = A eta + F'(X) eta + source along ``states``."""
    op = eq.op
    decay, phi_h, _, _ = ou_coefficients(eq.rates, dt)
    out = np.empty((len(states),) + np.shape(eta0))
    eta = np.array(eta0, dtype=float)
    out[0] = eta
    for j in range(len(states) - 1):
        forcing = eq.tangent_multiplier(states[j]) * eta
        if source is not None:
            forcing = forcing + source[j]
        eta = op.synthesize(op.project(eta) * decay + op.project(forcing) * phi_h)
        _check_blowup(eta, (j + 1) * dt, np.inf)
        out[j + 1] = eta
    return out


def first_variation(eq: Equation, base: Trajectory, h, s: float = 0.0) -> Trajectory:
    """eta(t) = U_{t,s} h along ``base``; recorded from time s on.

    ``h`` may be a batch of directions (d, N); states are then (d, times, N).
    """
    _require_full(base)
    h = check_field(eq.op, h, "h")
    j0 = int(round(s / base.dt))
    if abs(j0 * base.dt - s) > 1e-9 * max(1.0, s) or not 0 <= j0 < len(base.times):
        raise ValueError(f"s={s} is not a recorded time of the base trajectory")
    etas = np.moveaxis(_linear_flow(eq, base.states[j0:], h, base.dt), 0, -2)
    return Trajectory(base.times[j0:], etas, base.dt, 1, base.noise, base.model)


def second_variation(eq: Equation, base: Trajectory, h, k) -> Trajectory:
    """zeta(t) = int_0^t U_{t,s} F''(X(s)) (eta_h(s) eta_k(s)) ds, one forward pass."""
    _require_full(base)
    if np.ndim(h) != 1 or np.ndim(k) != 1:
        raise ValueError("second_variation takes single directions h, k")
    eh = first_variation(eq, base, h).states
    ek = first_variation(eq, base, k).states
    source = apply_reaction_derivative(eq.reaction, base.states, 2) * (eh * ek)
    zeta = _linear_flow(eq, base.states, np.zeros_like(eh[0]), base.dt, source)
    return Trajectory(base.times, zeta, base.dt, 1, base.noise, base.model)


@dataclass(frozen=True)
class VcfReport:
    times: np.ndarray
    residual_h: np.ndarray
    residual_e: np.ndarray
    linearize: str

    @property
    def sup_h(self) -> float:
        return float(np.max(self.residual_h))

    @property
    def sup_e(self) -> float:
        return float(np.max(self.residual_e))


def variation_of_constants_check(eq: Equation, x0, path: NoisePath | None, cfg: SolverConfig,
                                 linearize: str = "flow") -> VcfReport:
    """Residual of Y(t) = X(t) + int_0^t U_{t,s}^{Y(s)} B(Y(s)) ds on the time grid.

    ``linearize="flow"``: U_{t,s}^{y} is the derivative at y of the unperturbed
    flow started at time s (the discrete identity then holds up to O(dt)).
    ``linearize="path"``: the linear equation with multiplier F'(Y(t)), i.e.
    linearization along the perturbed trajectory itself.
    """
    if eq.drift is None:
        raise ValueError("variation-of-constants check needs a drift B")
    if linearize not in ("flow", "path"):
        raise ValueError(f"linearize must be 'flow' or 'path', got {linearize!r}")
    cfg = replace(cfg, record_stride=1)
    op = eq.op
    Y = solve_mild(eq, x0, path, cfg).states
    X = solve_mild(eq.without_drift(), x0, path, cfg).states
    unperturbed = eq.without_drift()
    n = cfg.n_steps
    decay, phi_h, _, _ = ou_coefficients(eq.rates, cfg.dt)
    delta = op.synthesize(op.project(eq.drift(Y[:-1], op.nodes)) * phi_h)   # (n, N)
    ou = _noise_for(eq, path, cfg)
    n_noise = 0 if ou is None else ou.shape[1]

    Z = np.zeros_like(delta)
    eta = np.zeros_like(delta)
    rhs = np.empty_like(Y)
    rhs[0] = X[0]
    for i in range(1, n + 1):
        a = i - 1  # rows [0, a) are active on [t_{i-1}, t_i]
        if a:
            if linearize == "flow":
                z = Z[:a]
                mult = unperturbed.tangent_multiplier(z)
                cz = op.project(z) * decay + op.project(unperturbed.nonlinear(z)) * phi_h
                if n_noise:
                    cz[:, :n_noise] += ou[0, :, i - 1]
                Z[:a] = op.synthesize(cz)
            else:
                mult = unperturbed.tangent_multiplier(Y[i - 1])[None, :]
            e = eta[:a]
            eta[:a] = op.synthesize(op.project(e) * decay + op.project(mult * e) * phi_h)
        Z[a] = Y[i]
        eta[a] = delta[a]
        rhs[i] = X[i] + eta[:i].sum(axis=0)
    r = Y - rhs
    times = cfg.dt * np.arange(n + 1)
    return VcfReport(times, op.h_norm(r), np.max(np.abs(r), axis=-1), linearize)


# ---------------------------------------------------------------------------
# moment diagnostics


@dataclass(frozen=True)
class MomentReport:
    x0_sup_norms: np.ndarray          # |x0|_E per ensemble
    sup_moments: dict                 # p -> E (sup_t |X|_E)^p per ensemble
    sup_quantiles: np.ndarray         # (ensemble, [0.05, 0.5, 0.95]) of sup_t |X|_E
    growth_slope: float               # fit E sup_t|X|_E ~ a + slope |x0|_E
    growth_intercept: float
    probe_time: float | None
    probe_means: np.ndarray | None    # E |X(probe_time)|_E per ensemble
    lipschitz_ratios: np.ndarray      # per pair: max_{t, samples} |X(t,x)-X(t,y)|_H / |x-y|_H


def moment_estimates(op: SpectralOperator, ensembles: Sequence[Trajectory], p: Sequence[int] = (1, 2),
                     probe_time: float | None = None,
                     pairs: Sequence[tuple[int, int]] = ()) -> MomentReport:
    """Empirical moments of ensembles started from different x0 (same seeds for pairs)."""
    for ens in ensembles:
        if ens.states.ndim != 3 or ens.states.shape[0] < 100:
            raise ValueError("each ensemble needs >= 100 trajectories of shape (n, times, N)")
    x0n = np.array([np.max(np.abs(ens.states[0, 0])) for ens in ensembles])
    sups = [np.max(np.abs(ens.states), axis=(1, 2)) for ens in ensembles]
    moments = {int(q): np.array([np.mean(s**q) for s in sups]) for q in p}
    quant = np.array([np.quantile(s, [0.05, 0.5, 0.95]) for s in sups])
    if len(ensembles) >= 2:
        slope, intercept = np.polyfit(x0n, moments.get(1, np.array([np.mean(s) for s in sups])), 1)
    else:
        slope, intercept = np.nan, np.nan
    probe = None
    if probe_time is not None:
        probe = np.array([np.mean(np.max(np.abs(ens.at(probe_time)), axis=-1)) for ens in ensembles])
    ratios = []
    for a, b in pairs:
        xa, xb = ensembles[a].states, ensembles[b].states
        d0 = float(op.h_norm(xa[0, 0] - xb[0, 0]))
        ratios.append(float(np.max(op.h_norm(xa - xb))) / d0)
    return MomentReport(x0n, moments, quant, float(slope), float(intercept), probe_time, probe,
                        np.array(ratios))
