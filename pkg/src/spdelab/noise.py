"""Counter-based space-time white noise and the stochastic convolution.

Every Gaussian variate is addressed by ``(seed, level, tag, step, mode)``: one
Philox stream per ``(seed, level, tag)`` key, element ``(step, mode)`` at stream
position ``step * n_modes + mode``. Any sub-block is therefore reproducible
without replaying earlier draws.

Refinement level ``l`` halves the step ``l`` times by Brownian-bridge
subdivision, so every level samples the same Brownian motion. The exact
Ornstein-Uhlenbeck increments ``int e^{mu (t_{j+1}-s)} dW(s)`` are built at a
single resolution level (``ou_level``) from the Brownian increments plus one
auxiliary normal per (step, mode) and aggregated exactly to coarser levels.
Paths sharing ``seed`` and ``ou_level`` thus yield mutually consistent
convolutions at every level. This bridge construction is our own device for
holding one noise realization fixed across resolutions.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtri

from .spectral import SpectralOperator

_MASK64 = (1 << 64) - 1
_TAG_BASE = 0
_TAG_BRIDGE = 1
_TAG_OU = 2


def derive_seed(seed: int, index: int) -> int:
    """Per-sample seed: ``seed XOR blake2b(index)``."""
    digest = hashlib.blake2b(int(index).to_bytes(8, "little"), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & _MASK64


def normal_block(seed: int, level: int, tag: int, n_steps: int, n_modes: int,
                 start_step: int = 0) -> np.ndarray:
    """Standard normals of shape (n_steps, n_modes) starting at ``start_step``."""
    key = (int(seed) & _MASK64) | (int(level) << 64) | (int(tag) << 96)
    bitgen = np.random.Philox(key=key)
    pos = start_step * n_modes
    bitgen.advance(pos // 4)
    raw = bitgen.random_raw(n_steps * n_modes + pos % 4)[pos % 4:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(n_steps, n_modes)


@dataclass(frozen=True)
class NoisePathSpec:
    """Base step ``dt`` and ``n_steps``; ``level`` refines both by 2**level."""

    seed: int
    dt: float
    n_steps: int
    n_modes: int
    level: int = 0
    ou_level: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 1 or self.n_modes < 1:
            raise ValueError("n_steps and n_modes must be positive")
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.ou_level is not None and self.ou_level < self.level:
            raise ValueError("ou_level must be >= level")
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    @property
    def step(self) -> float:
        return self.dt / 2**self.level

    @property
    def total_steps(self) -> int:
        return self.n_steps * 2**self.level

    @property
    def resolved_ou_level(self) -> int:
        return self.level if self.ou_level is None else self.ou_level

    def refined(self, levels: int = 1) -> "NoisePathSpec":
        ou = self.ou_level
        if ou is not None:
            ou = max(ou, self.level + levels)
        return NoisePathSpec(self.seed, self.dt, self.n_steps, self.n_modes,
                             self.level + levels, ou)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "dt": self.dt, "n_steps": self.n_steps,
                "n_modes": self.n_modes, "level": self.level,
                "ou_level": self.resolved_ou_level}


def _brownian_increments(spec: NoisePathSpec, level: int) -> np.ndarray:
    """(n_modes, n_steps * 2**level) increments, bridge-refined from level 0."""
    inc = np.sqrt(spec.dt) * normal_block(spec.seed, 0, _TAG_BASE, spec.n_steps, spec.n_modes)
    h = spec.dt
    for lev in range(1, level + 1):
        z = normal_block(spec.seed, lev, _TAG_BRIDGE, inc.shape[0], spec.n_modes)
        half = 0.5 * inc
        spread = 0.5 * np.sqrt(h) * z
        fine = np.empty((2 * inc.shape[0], spec.n_modes))
        fine[0::2] = half + spread
        fine[1::2] = half - spread
        inc = fine
        h /= 2
    return np.ascontiguousarray(inc.T)


def ou_coefficients(mu: np.ndarray, h: float):
    """Decay, drift weight and Brownian/orthogonal loadings of one exact OU step.

    Returns ``(decay, phi_h, c1, c2)`` with decay = e^{mu h},
    phi_h = (e^{mu h} - 1)/mu (= h at mu = 0), and the OU increment
    I = c1 * (dW / sqrt(h)) + c2 * Z for an independent standard normal Z.
    """
    mu = np.asarray(mu, dtype=float)
    decay = np.exp(mu * h)
    safe = np.where(mu == 0.0, 1.0, mu)
    phi_h = np.where(mu == 0.0, h, np.expm1(mu * h) / safe)
    var = np.where(mu == 0.0, h, np.expm1(2 * mu * h) / (2 * safe))
    c1 = phi_h / np.sqrt(h)
    # var - c1^2 cancels for small |mu h|; use its Taylor series there
    a = mu * h
    series = h * a**2 * (1 / 12 + a / 12 + 17 * a**2 / 360 + 7 * a**3 / 360)
    resid = np.where(np.abs(a) < 2e-3, series, var - c1**2)
    c2 = np.sqrt(np.maximum(resid, 0.0))
    return decay, phi_h, c1, c2


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Read-only Brownian mode increments for one noise realization."""

    spec: NoisePathSpec

    @cached_property
    def increments(self) -> np.ndarray:
        inc = _brownian_increments(self.spec, self.spec.level)
        inc.setflags(write=False)
        return inc

    @property
    def n_modes(self) -> int:
        return self.spec.n_modes

    @property
    def dt(self) -> float:
        return self.spec.step

    @property
    def n_steps(self) -> int:
        return self.spec.total_steps

    def ou_increments(self, mu) -> np.ndarray:
        """Exact OU increments (n_modes, n_steps) for rates ``mu`` (one per mode)."""
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.n_modes,):
            raise ValueError(f"need {self.n_modes} rates, got shape {mu.shape}")
        spec = self.spec
        lvl = spec.resolved_ou_level
        fine_inc = self.increments if lvl == spec.level else _brownian_increments(spec, lvl)
        h = spec.dt / 2**lvl
        _, _, c1, c2 = ou_coefficients(mu, h)
        z = normal_block(spec.seed, lvl, _TAG_OU, fine_inc.shape[1], spec.n_modes).T
        ou = c1[:, None] * fine_inc / np.sqrt(h) + c2[:, None] * z
        for _ in range(lvl - spec.level):
            ou = np.exp(mu * h)[:, None] * ou[:, 0::2] + ou[:, 1::2]
            h *= 2
        return ou


def sample_noise(spec: NoisePathSpec) -> NoisePath:
    return NoisePath(spec)


@dataclass(frozen=True)
class Convolution:
    """W_A on the path's time grid: ``coeffs`` (n_steps+1, M), ``states`` on the grid."""

    times: np.ndarray
    coeffs: np.ndarray
    states: np.ndarray


def stochastic_convolution(op: SpectralOperator, path: NoisePath) -> Convolution:
    """Per-mode exact OU recursion a(t+dt) = e^{mu dt} a(t) + I, with a(0) = 0."""
    if op.n_modes < path.n_modes:
        raise ValueError(
            f"operator has {op.n_modes} modes, noise path has {path.n_modes}"
        )
    mu = op.eigenvalues[: path.n_modes]
    decay = np.exp(mu * path.dt)
    ou = path.ou_increments(mu)
    coeffs = np.zeros((path.n_steps + 1, op.n_modes))
    for j in range(path.n_steps):
        coeffs[j + 1, : path.n_modes] = decay * coeffs[j, : path.n_modes] + ou[:, j]
    times = path.dt * np.arange(path.n_steps + 1)
    return Convolution(times=times, coeffs=coeffs, states=op.synthesize(coeffs))
