"""Reaction terms F (polynomial Nemytskii maps) and bounded Hölder drifts B."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .spectral import SpectralOperator


class BlowUp(RuntimeError):
    """Sup-norm of a state exceeded the configured threshold."""

    def __init__(self, t: float, norm: float, sample: int | None = None):
        self.t = t
        self.norm = norm
        self.sample = sample
        where = "" if sample is None else f" (sample {sample})"
        super().__init__(f"blow-up at t={t:.6g}: |X|_E={norm:.4g}{where}")


def _as_profile(c, n: int | None = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(c, dtype=float))
    if n is not None and arr.size == 1:
        arr = np.full(n, arr.item())
    return arr


@dataclass(frozen=True, eq=False)
class PolynomialReaction:
    """f(xi, s) = -alpha(xi) s^{2m+1} + sum_{j<=2m} c_j(xi) s^j.

    ``alpha`` and each ``coeffs[j]`` are scalars or grid profiles. When the
    linear coefficient is spatially constant it is exposed as ``linear_rate``
    and the solvers fold it into the exponential (exact for linear f).
    """

    m: int
    alpha: np.ndarray | float = 1.0
    coeffs: tuple = ()
    blow_up_threshold: float = 1e6

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("degree parameter m must be >= 0")
        coeffs = tuple(_as_profile(c) for c in self.coeffs)
        if len(coeffs) > 2 * self.m + 1:
            raise ValueError(f"at most {2 * self.m + 1} lower coefficients for m={self.m}")
        coeffs = coeffs + tuple(np.zeros(1) for _ in range(2 * self.m + 1 - len(coeffs)))
        object.__setattr__(self, "coeffs", coeffs)
        alpha = _as_profile(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if self.m >= 1 and not np.min(alpha) > 0:
            raise ValueError("leading coefficient alpha must be > 0 everywhere when m >= 1")

    @classmethod
    def cubic(cls, alpha: float = 1.0, **kw) -> "PolynomialReaction":
        return cls(m=1, alpha=alpha, **kw)

    @classmethod
    def linear(cls, rate: float, **kw) -> "PolynomialReaction":
        """f(s) = rate * s."""
        return cls(m=0, alpha=-rate, **kw)

    @classmethod
    def zero(cls) -> "PolynomialReaction":
        return cls(m=0, alpha=0.0)

    @property
    def degree(self) -> int:
        return 2 * self.m + 1

    def _poly(self) -> list[np.ndarray]:
        """Coefficient profiles p_j of s^j, j = 0..2m+1."""
        return list(self.coeffs) + [-self.alpha]

    @cached_property
    def linear_rate(self) -> float:
        p1 = self._poly()[1]
        return float(p1[0]) if np.all(p1 == p1[0]) else 0.0

    @property
    def is_linear(self) -> bool:
        p = self._poly()
        return self.linear_rate == p[1][0] and not any(np.any(pj) for j, pj in enumerate(p) if j != 1)

    @property
    def alpha0(self) -> float:
        return float(np.min(self.alpha))

    def _guard(self, x: np.ndarray):
        norm = np.max(np.abs(x)) if x.size else 0.0
        if not norm <= self.blow_up_threshold:
            raise BlowUp(float("nan"), float(norm))

    def _eval(self, x: np.ndarray, order: int) -> np.ndarray:
        p = self._poly()
        out = np.zeros_like(x, dtype=float)
        # Horner in s on the differentiated coefficients
        for j in range(len(p) - 1, order - 1, -1):
            factor = 1.0
            for r in range(order):
                factor *= j - r
            out = out * x + factor * p[j]
        return out

    def __call__(self, x) -> np.ndarray:
        return apply_reaction(self, x)

    @cached_property
    def rho(self) -> float:
        """sup_{xi, s} D_s f(xi, s), attained at a critical point of D_s f."""
        best = -np.inf
        n_prof = max(len(pj) for pj in self._poly())
        for i in range(n_prof):
            d1 = np.polynomial.Polynomial(_profile_slice(self, i)._poly_scalars()).deriv(1)
            if d1.degree() == 0:
                best = max(best, float(d1.coef[0]))
                continue
            crit = np.atleast_1d(d1.deriv(1).roots())
            best = max(best, max(float(d1(r.real)) for r in crit if abs(r.imag) < 1e-9))
        return best

    def _poly_scalars(self) -> list[float]:
        return [float(pj[0]) for pj in self._poly()]

    def describe(self) -> dict:
        return {"m": self.m, "alpha": self.alpha.tolist(),
                "coeffs": [c.tolist() for c in self.coeffs]}

    def dissipativity_constants(self, dissipation: float | None = None,
                                s_max: float = 20.0, n: int = 401,
                                margin: float = 1.1) -> tuple[float, float, float]:
        """(a, gamma, c) with (f(s+h)-f(s))h <= -a h^{2(m+1)} + c(1+|s|^gamma).

        ``a`` defaults to alpha0/2: with a = alpha0 the inequality fails for
        sign-changing h at fixed s. ``c`` is the lattice maximum times ``margin``.
        """
        if self.m < 1:
            raise ValueError("dissipativity condition applies for m >= 1")
        a = self.alpha0 / 2 if dissipation is None else dissipation
        gamma = 2.0 * (self.m + 1)
        s = np.linspace(-s_max, s_max, n)
        h = np.linspace(-2 * s_max, 2 * s_max, 2 * n + 1)
        S, Hh = np.meshgrid(s, h, indexing="ij")
        worst = -np.inf
        n_prof = max(len(pj) for pj in self._poly())
        for i in range(n_prof):
            sub = _profile_slice(self, i)
            lhs = (sub._eval(S + Hh, 0) - sub._eval(S, 0)) * Hh + a * Hh ** (2 * (self.m + 1))
            worst = max(worst, float(np.max(lhs / (1 + np.abs(S) ** gamma))))
        return a, gamma, margin * max(worst, 0.0)


def _profile_slice(F: PolynomialReaction, i: int) -> PolynomialReaction:
    pick = lambda c: float(c[i] if len(c) > 1 else c[0])
    return PolynomialReaction(F.m, pick(F.alpha), tuple(pick(c) for c in F.coeffs),
                              F.blow_up_threshold)


def apply_reaction(F: PolynomialReaction, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    F._guard(x)
    return F._eval(x, 0)


def apply_reaction_derivative(F: PolynomialReaction, x, order: int = 1) -> np.ndarray:
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    x = np.asarray(x, dtype=float)
    F._guard(x)
    return F._eval(x, order)


# ---------------------------------------------------------------------------
# scalar Hölder functions b


@dataclass(frozen=True)
class HolderScalar:
    """Bounded scalar map with |b(s) - b(s')| <= M |s - s'|^alpha and sup |b| = bound."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    M: float
    alpha: float
    bound: float
    params: tuple = ()

    def __call__(self, s):
        return self.fn(np.asarray(s, dtype=float))

    def describe(self) -> dict:
        return {"b": self.name, "M": self.M, "alpha": self.alpha,
                "bound": self.bound, "params": list(self.params)}


def sine_b(amplitude: float = 1.0) -> HolderScalar:
    """amplitude * sin(s): Lipschitz, M = amplitude."""
    return HolderScalar("sine", lambda s: amplitude * np.sin(s), abs(amplitude), 1.0,
                        abs(amplitude), (amplitude,))


def power_b(alpha: float) -> HolderScalar:
    """min(1, |s|^alpha) sign(s); M = 2^{1-alpha} (opposite-sign pairs)."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    fn = lambda s: np.minimum(1.0, np.abs(s) ** alpha) * np.sign(s)
    return HolderScalar("power", fn, 2.0 ** (1 - alpha), alpha, 1.0, (alpha,))


def dist_z_b(alpha: float) -> HolderScalar:
    """dist(s, Z)^alpha; M = 1, sup = 2^{-alpha}."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    fn = lambda s: np.abs(s - np.round(s)) ** alpha
    return HolderScalar("dist_z", fn, 1.0, alpha, 2.0**-alpha, (alpha,))


def constant_b(value: float) -> HolderScalar:
    return HolderScalar("constant", lambda s: np.full_like(s, value), 0.0, 1.0,
                        abs(value), (value,))


SCALARS = {"sine": sine_b, "power": power_b, "dist_z": dist_z_b, "constant": constant_b}


# ---------------------------------------------------------------------------
# drifts B : E -> E


class Variant(str, enum.Enum):
    POINT_EVAL = "point_eval"
    RUNNING_MAX = "running_max"
    RUNNING_MAX_ABS = "running_max_abs"
    POINTWISE = "pointwise"
    MOLLIFIED = "mollified"


@dataclass(frozen=True, eq=False)
class HolderDrift:
    """Bounded Hölder drift. Construct via the helper functions below.

    Grid fields are passed along the last axis; ``nodes`` are needed for
    point evaluation. ``eps0``/``eps1`` carry the Hölder-space exponents of
    the E_eps mapping property when known (verified empirically only).
    """

    variant: Variant
    b: HolderScalar | None = None
    xi0: float = 0.5
    g: np.ndarray | None = None
    inner: "HolderDrift | None" = None
    m: int = 0
    samples: int = 0
    seed: int = 0
    op: SpectralOperator | None = None
    eps0: float | None = None
    eps1: float | None = None

    def __call__(self, x, nodes: np.ndarray | None = None) -> np.ndarray:
        return apply_drift(self, x, nodes)

    @property
    def holder_alpha(self) -> float:
        return self.inner.holder_alpha if self.variant is Variant.MOLLIFIED else self.b.alpha

    @property
    def holder_bound(self) -> float:
        """Seminorm bound [B]_{C^alpha(E, E)}."""
        if self.variant is Variant.MOLLIFIED:
            return self.inner.holder_bound
        if self.variant is Variant.POINT_EVAL:
            return self.b.M * float(np.max(np.abs(self.g)))
        return self.b.M

    @property
    def sup_bound(self) -> float:
        if self.variant is Variant.MOLLIFIED:
            return self.inner.sup_bound
        if self.variant is Variant.POINT_EVAL:
            return self.b.bound * float(np.max(np.abs(self.g)))
        return self.b.bound

    def describe(self) -> dict:
        d = {"variant": self.variant.value}
        if self.variant is Variant.MOLLIFIED:
            d.update(inner=self.inner.describe(), m=self.m, samples=self.samples, seed=self.seed)
            return d
        d.update(self.b.describe())
        if self.variant is Variant.POINT_EVAL:
            d.update(xi0=self.xi0, g=np.asarray(self.g).tolist())
        return d


def point_eval(b: HolderScalar, xi0: float, g) -> HolderDrift:
    return HolderDrift(Variant.POINT_EVAL, b=b, xi0=xi0, g=np.asarray(g, dtype=float))


def running_max(b: HolderScalar) -> HolderDrift:
    return HolderDrift(Variant.RUNNING_MAX, b=b)


def running_max_abs(b: HolderScalar) -> HolderDrift:
    return HolderDrift(Variant.RUNNING_MAX_ABS, b=b)


def pointwise(b: HolderScalar) -> HolderDrift:
    return HolderDrift(Variant.POINTWISE, b=b)


def mollified(inner: HolderDrift, op: SpectralOperator, m: int, samples: int = 64,
              seed: int = 0) -> HolderDrift:
    """B_m with a fixed quadrature sample set, hence a deterministic map."""
    if inner.variant is Variant.MOLLIFIED:
        raise ValueError("drift is already mollified")
    if not 1 <= m <= op.n_modes:
        raise ValueError(f"need 1 <= m <= n_modes={op.n_modes}, got {m}")
    if samples < 1:
        raise ValueError("quadrature_samples must be >= 1")
    return HolderDrift(Variant.MOLLIFIED, inner=inner, m=m, samples=samples, seed=seed, op=op)


def prefix_max(x: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(x, axis=-1)


def apply_drift(B: HolderDrift, x, nodes: np.ndarray | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = B.variant
    if v is Variant.POINT_EVAL:
        if nodes is None:
            nodes = np.linspace(0.0, 1.0, x.shape[-1])
        val = _interp_last(x, nodes, B.xi0)
        return B.b(val)[..., None] * B.g
    if v is Variant.RUNNING_MAX:
        return B.b(prefix_max(x))
    if v is Variant.RUNNING_MAX_ABS:
        return B.b(prefix_max(np.abs(x)))
    if v is Variant.POINTWISE:
        return B.b(x)
    return _mollified_eval(B, x)


def _interp_last(x: np.ndarray, nodes: np.ndarray, xi0: float) -> np.ndarray:
    j = int(np.clip(np.searchsorted(nodes, xi0, side="right") - 1, 0, len(nodes) - 2))
    w = (xi0 - nodes[j]) / (nodes[j + 1] - nodes[j])
    return (1 - w) * x[..., j] + w * x[..., j + 1]


# ---------------------------------------------------------------------------
# Fejér means and mollification


def fejer_weights(m: int) -> np.ndarray:
    """Weights of (1/m) sum_{k=1}^m P_k on the first m modes: (m - i)/m, i = 0..m-1."""
    return (m - np.arange(m)) / m


def fejer_projection(op: SpectralOperator, m: int, x) -> np.ndarray:
    """Cesàro mean of the first m spectral partial sums."""
    if not 1 <= m <= op.n_modes:
        raise ValueError(f"need 1 <= m <= n_modes={op.n_modes}, got {m}")
    c = op.project(x)[..., :m] * fejer_weights(m)
    return c @ op.basis[:m]


def bump_radius_inverse_cdf(m: int, n_grid: int = 4001):
    """Inverse CDF of |xi| for the radial bump exp(-1/(1-(m^2 r)^2)) on the m-ball."""
    R = 1.0 / m**2
    u = np.linspace(0.0, 1.0, n_grid)[1:-1]
    dens = np.exp((m - 1) * np.log(u) - 1.0 / (1.0 - u**2))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))])
    cdf /= cdf[-1]
    return lambda p: R * np.interp(p, cdf, u)


def bump_samples(m: int, n: int, seed: int) -> np.ndarray:
    """n draws from the radial C^inf bump density supported in {|xi| <= 1/m^2} of R^m."""
    rng = np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))
    direction = rng.standard_normal((n, m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = bump_radius_inverse_cdf(m)(rng.random(n))
    return direction * radius[:, None]


def _mollified_eval(B: HolderDrift, x: np.ndarray) -> np.ndarray:
    return mollify_drift(B.inner, B.op, B.m, x, B.samples, B.seed)


def mollify_drift(B: HolderDrift, op: SpectralOperator, m: int, x, quadrature_samples: int,
                  seed: int = 0) -> np.ndarray:
    """Monte Carlo B_m(x) = E_xi B(P̂_m(x - T_m xi)), xi ~ radial bump on the m-ball."""
    if B.variant is Variant.MOLLIFIED:
        raise ValueError("drift is already mollified")
    if quadrature_samples < 1:
        raise ValueError("quadrature_samples must be >= 1")
    x = np.asarray(x, dtype=float)
    w = fejer_weights(m)
    cx = op.project(x)[..., :m] * w                      # (..., m)
    xi = bump_samples(m, quadrature_samples, seed) * w   # (Q, m)
    coeffs = cx[..., None, :] - xi                       # (..., Q, m)
    fields = coeffs @ op.basis[:m]
    return np.mean(apply_drift(B, fields, op.nodes), axis=-2)


def mollification_radius_bound(m: int) -> float:
    """sup |P̂_m T_m xi|_E over |xi| <= 1/m^2, with |e_k|_E <= sqrt(2)."""
    return np.sqrt(2.0) * (m + 1) / (2.0 * m**2)


def empirical_holder_seminorm(B: Callable, pairs: Sequence, alpha: float,
                              norm: Callable = None) -> float:
    """max over pairs of |B(x) - B(x')|_E / |x - x'|_E^alpha (a lower bound)."""
    if not pairs:
        raise ValueError("need at least one pair")
    norm = norm or (lambda z: np.max(np.abs(z), axis=-1))
    best = 0.0
    for x, y in pairs:
        d = float(norm(np.asarray(x) - np.asarray(y)))
        if d < 1e-12:
            warnings.warn("degenerate pair skipped (|x - x'|_E < 1e-12)", stacklevel=2)
            continue
        best = max(best, float(norm(B(x) - B(y))) / d**alpha)
    return best
