"""Spectral discretization of the Laplacian on [0, 1].

Fields are plain ``numpy`` arrays of grid values (last axis = grid nodes).
Spectral coefficients are obtained by trapezoidal quadrature against the
orthonormal eigenfunctions, so every operator here acts on leading batch axes
unchanged.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class Boundary(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0, 1] (endpoints included) and a spectral truncation."""

    n_points: int
    boundary: Boundary = Boundary.DIRICHLET
    n_modes: int = 0

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.n_modes == 0:
            object.__setattr__(self, "n_modes", self.n_points // 2)
        if self.n_points < 3:
            raise ValueError(f"n_points must be >= 3, got {self.n_points}")
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.n_modes > self.n_points:
            raise ValueError(
                f"n_modes={self.n_modes} exceeds n_points={self.n_points} (aliasing)"
            )
        # discrete orthogonality of the sampled eigenfunctions breaks beyond this
        if self.n_modes > self.n_points - 2:
            raise ValueError(
                f"n_modes={self.n_modes} aliases on {self.n_points} nodes; "
                f"need n_modes <= n_points - 2"
            )

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_points)

    @cached_property
    def weights(self) -> np.ndarray:
        h = 1.0 / (self.n_points - 1)
        w = np.full(self.n_points, h)
        w[0] = w[-1] = h / 2
        return w


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Eigenpairs of D^2 on [0, 1] with Dirichlet or Neumann conditions.

    ``wavenumbers[i]`` is the integer k of the i-th retained mode, so
    ``eigenvalues[i] = -(k*pi)**2``. Dirichlet keeps k = 1..M, Neumann k = 0..M-1.
    """

    grid: GridSpec
    wavenumbers: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray = field(repr=False)  # (M, N): basis[i] = e_{k_i} on the grid

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @cached_property
    def _weighted_basis_t(self) -> np.ndarray:
        return (self.basis * self.grid.weights).T.copy()

    def project(self, x: np.ndarray) -> np.ndarray:
        """Spectral coefficients <x, e_k>_H by trapezoidal quadrature."""
        return np.asarray(x, dtype=float) @ self._weighted_basis_t

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs, dtype=float) @ self.basis

    def mode(self, k: int) -> np.ndarray:
        """Grid values of the eigenfunction with wavenumber k."""
        idx = np.flatnonzero(self.wavenumbers == k)
        if idx.size == 0:
            raise ValueError(f"wavenumber {k} not among retained modes")
        return self.basis[idx[0]].copy()

    def inner(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.sum(np.asarray(x) * np.asarray(y) * self.grid.weights, axis=-1)

    def h_norm(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(self.inner(x, x))

    @staticmethod
    def sup_norm(x: np.ndarray) -> np.ndarray:
        return np.max(np.abs(x), axis=-1)


def build_operator(grid: GridSpec) -> SpectralOperator:
    M = grid.n_modes
    xi = grid.nodes
    if grid.boundary is Boundary.DIRICHLET:
        k = np.arange(1, M + 1)
        basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(k, xi))
        basis[:, 0] = basis[:, -1] = 0.0  # sin(k*pi) is not exactly zero in floats
    else:
        k = np.arange(0, M)
        basis = np.sqrt(2.0) * np.cos(np.pi * np.outer(k, xi))
        basis[0] = 1.0
    basis.setflags(write=False)
    mu = -((np.pi * k) ** 2).astype(float)
    k.setflags(write=False)
    mu.setflags(write=False)
    return SpectralOperator(grid=grid, wavenumbers=k, eigenvalues=mu, basis=basis)


def check_field(op: SpectralOperator, x, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = np.full(op.grid.n_points, float(x))
    if x.shape[-1] != op.grid.n_points:
        raise ValueError(
            f"{name} has {x.shape[-1]} grid values, expected {op.grid.n_points}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _spectral_multiply(op: SpectralOperator, x: np.ndarray, mult: np.ndarray) -> np.ndarray:
    return op.synthesize(op.project(x) * mult)


def apply_semigroup(op: SpectralOperator, t: float, x) -> np.ndarray:
    """e^{tA} x. At t = 0 the input is returned unchanged (no projection)."""
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    x = check_field(op, x)
    if t == 0:
        return x.copy()
    return _spectral_multiply(op, x, np.exp(op.eigenvalues * t))


def yosida_smooth(op: SpectralOperator, n: float, x) -> np.ndarray:
    """J_n x = n R(n, A) x, i.e. mode-wise multiplier n / (n - mu_k)."""
    if not n > 0:
        raise ValueError(f"Yosida parameter must be > 0, got {n}")
    x = check_field(op, x)
    return _spectral_multiply(op, x, n / (n - op.eigenvalues))


def kernel_tail_bound(op: SpectralOperator, t: float) -> float:
    """Upper bound on sup |K_t - K_t^{(M)}| from the discarded modes."""
    k0 = int(op.wavenumbers[-1]) + 1
    lead = np.exp(-((k0 * np.pi) ** 2) * t)
    ratio = np.exp(-(2 * k0 + 1) * np.pi**2 * t)
    if ratio >= 1.0:
        return np.inf
    return float(2.0 * lead / (1.0 - ratio))


def heat_kernel(op: SpectralOperator, t: float, tol: float = 1e-8) -> np.ndarray:
    """K_t(xi_i, theta_j) = sum_k e^{mu_k t} e_k(xi_i) e_k(theta_j)."""
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    tail = kernel_tail_bound(op, t)
    if tail > tol:
        raise ValueError(
            f"kernel series unconverged at t={t}: tail bound {tail:.3e} > {tol:g}; "
            f"increase n_modes or t"
        )
    decay = np.exp(op.eigenvalues * t)
    return (op.basis.T * decay) @ op.basis


def ultracontractive_norm(op: SpectralOperator, t: float) -> float:
    """sup_{|x|_H = 1} |e^{tA} x|_E over the retained modes, i.e. max_xi |K_t(xi, .)|_H."""
    decay = np.exp(2 * op.eigenvalues * t)
    return float(np.sqrt(np.max(decay @ op.basis**2)))
