"""Experiment runners: simulation, kernel tables, estimates and pathwise uniqueness.

The uniqueness experiments solve the perturbed equation several times on one
fixed noise realization and measure how far apart the solutions are. Gaps that
shrink under time refinement (or under mollification of the drift) show that
the discretizations form a Cauchy family on that realization. This is numerical
evidence of a single pathwise limit, not a proof of uniqueness.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ExperimentConfig
from .drift import BlowUp, HolderDrift, Variant, mollified
from .noise import NoisePath, NoisePathSpec, derive_seed
from .parallel import map_batches
from .semigroup import (EstimatorResult, TestFunctional, bismut_elworthy_derivative,
                        bounded_composite, estimate_Pt, estimate_resolvent, mode_coefficient,
                        point_value, sup_norm, vectorial_Pt)
from .solver import Equation, SolverConfig, Trajectory, solve_mild
from .spectral import SpectralOperator, heat_kernel, ultracontractive_norm


# ---------------------------------------------------------------------------
# uniqueness


@dataclass(frozen=True)
class UniquenessReport:
    """Gap curves of one uniqueness experiment.

    ``gaps_e[i, j]`` is sup_t |Y_a - Y_b|_E for seed i and comparison j, ``gaps_h``
    the same in the H-norm. For the refinement route comparison j is between
    step dt/2^j and dt/2^{j+1}; for the mollification route it is between B_m
    (m = abscissa[j]) and the unmollified drift, with ``successive_e`` holding
    the gaps between consecutive m.
    """

    route: str
    abscissa_name: str
    abscissa: np.ndarray
    seeds: tuple
    gaps_e: np.ndarray
    gaps_h: np.ndarray
    slopes: np.ndarray            # per seed, fitted log-log slope of gaps_e
    mean_slope: float             # slope of the seed-averaged gap curve
    successive_e: np.ndarray | None = None
    noise: tuple = ()
    config_digest: str = ""
    p: int = 2
    extra: dict = field(default_factory=dict)

    @property
    def mean_gaps_e(self) -> np.ndarray:
        return self.gaps_e.mean(axis=0)

    @property
    def moment_gaps_h(self) -> np.ndarray:
        """Seed average of (sup_t |Y_a - Y_b|_H)^p."""
        return (self.gaps_h**self.p).mean(axis=0)

    def strictly_decreasing(self) -> np.ndarray:
        """Per seed: are the sup-norm gaps strictly decreasing along the abscissa?"""
        return np.all(np.diff(self.gaps_e, axis=1) < 0, axis=1)

    def rows(self) -> list[dict]:
        """Long format: one row per (curve, abscissa)."""
        out = []
        for i, s in enumerate(self.seeds):
            for a, v in zip(self.abscissa, self.gaps_e[i]):
                out.append({"curve": f"sup_E_gap/seed={s}", "abscissa": a, "value": v})
            for a, v in zip(self.abscissa, self.gaps_h[i]):
                out.append({"curve": f"sup_H_gap/seed={s}", "abscissa": a, "value": v})
            if self.successive_e is not None:
                for a, v in zip(self.abscissa[1:], self.successive_e[i]):
                    out.append({"curve": f"successive_E_gap/seed={s}", "abscissa": a,
                                "value": v})
        for a, v in zip(self.abscissa, self.mean_gaps_e):
            out.append({"curve": "mean_sup_E_gap", "abscissa": a, "value": v})
        for a, v in zip(self.abscissa, self.moment_gaps_h):
            out.append({"curve": f"mean_sup_H_gap^{self.p}", "abscissa": a, "value": v})
        return out

    def summary(self) -> dict:
        return {
            "route": self.route,
            "abscissa_name": self.abscissa_name,
            "abscissa": self.abscissa.tolist(),
            "seeds": list(self.seeds),
            "slopes": self.slopes.tolist(),
            "mean_slope": self.mean_slope,
            "strictly_decreasing": self.strictly_decreasing().tolist(),
            "mean_sup_E_gap": self.mean_gaps_e.tolist(),
            "noise": list(self.noise),
            "config_digest": self.config_digest,
            **self.extra,
        }


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _gap(op: SpectralOperator, a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    d = a - b
    return float(np.max(np.abs(d))), float(np.max(op.h_norm(d)))


def _path_seeds(cfg: ExperimentConfig) -> tuple:
    base = cfg["noise.seed"]
    return tuple([base] + [derive_seed(base, i) for i in range(1, cfg["uniqueness.n_paths"])])


def _require_drift(eq: Equation):
    if eq.drift is None:
        raise ConfigError("uniqueness experiments need a drift (set drift.variant)")


def refinement_gaps(eq: Equation, x0: np.ndarray, spec: NoisePathSpec, T: float,
                    levels: int, threshold: float = 1e6):
    """Solutions at dt/2^l, l = 0..levels, on one Brownian path; gaps between neighbours.

    The OU increments are built at the finest level and aggregated, so every
    level sees the same noise. States are compared on the coarsest time grid.
    """
    states = []
    for lev in range(levels + 1):
        path = NoisePath(NoisePathSpec(spec.seed, spec.dt, spec.n_steps, spec.n_modes, lev,
                                       levels))
        sc = SolverConfig(spec.dt / 2**lev, T, blow_up_threshold=threshold,
                          record_stride=2**lev)
        try:
            states.append(solve_mild(eq, x0, path, sc).states)
        except BlowUp as exc:
            exc.level = lev
            raise
    gaps = np.array([_gap(eq.op, states[i], states[i + 1]) for i in range(levels)])
    return gaps[:, 0], gaps[:, 1]


def run_uniqueness_refinement(cfg: ExperimentConfig, workers: int | None = None
                              ) -> UniquenessReport:
    op = cfg.operator()
    eq = cfg.equation(op)
    _require_drift(eq)
    x0 = cfg.initial(op)
    sc = cfg.solver()
    levels = cfg["uniqueness.levels"]
    seeds = _path_seeds(cfg)
    specs = [cfg.noise(0, levels, seed=s) for s in seeds]

    def run(a, b):
        return [refinement_gaps(eq, x0, specs[i], sc.T, levels, sc.blow_up_threshold)
                for i in range(a, b)]

    res = [g for batch in map_batches(run, len(seeds), workers or cfg["run.workers"], 1)
           for g in batch]
    ge = np.array([r[0] for r in res])
    gh = np.array([r[1] for r in res])
    dts = sc.dt / 2.0 ** np.arange(levels)
    slopes = np.array([_loglog_slope(dts, g) for g in ge])
    return UniquenessReport(
        "refinement", "level", np.arange(levels), seeds, ge, gh, slopes,
        _loglog_slope(dts, ge.mean(axis=0)),
        noise=tuple(s.as_dict() for s in specs), config_digest=cfg.digest(),
        extra={"dt": sc.dt, "T": sc.T, "drift": eq.drift.describe()})


def mollification_gaps(eq: Equation, x0: np.ndarray, path: NoisePath, sc: SolverConfig,
                       m_values, samples: int, seed: int):
    """Gaps of Y^{(m)} (drift B_m) against Y (drift B) and between consecutive m."""
    B = eq.drift
    if B.variant is Variant.MOLLIFIED:
        raise ConfigError("give the unmollified drift; the experiment mollifies it")
    ref = solve_mild(eq, x0, path, sc).states
    runs = []
    for m in m_values:
        try:
            runs.append(solve_mild(eq.with_drift(mollified(B, eq.op, m, samples, seed)),
                                   x0, path, sc).states)
        except BlowUp as exc:
            exc.level = m
            raise
    vs_ref = np.array([_gap(eq.op, r, ref) for r in runs])
    succ = np.array([_gap(eq.op, runs[i], runs[i + 1])[0] for i in range(len(runs) - 1)])
    return vs_ref[:, 0], vs_ref[:, 1], succ


def run_uniqueness_mollification(cfg: ExperimentConfig, workers: int | None = None
                                 ) -> UniquenessReport:
    op = cfg.operator()
    eq = cfg.equation(op)
    _require_drift(eq)
    if eq.drift.variant is Variant.MOLLIFIED:
        eq = eq.with_drift(eq.drift.inner)
    x0 = cfg.initial(op)
    sc = cfg.solver()
    m_values = cfg["uniqueness.m_values"]
    seeds = _path_seeds(cfg)
    specs = [cfg.noise(0, seed=s) for s in seeds]
    samples, mseed = cfg["drift.mollify_samples"], cfg["drift.mollify_seed"]

    def run(a, b):
        return [mollification_gaps(eq, x0, NoisePath(specs[i]), sc, m_values, samples, mseed)
                for i in range(a, b)]

    res = [g for batch in map_batches(run, len(seeds), workers or cfg["run.workers"], 1)
           for g in batch]
    ge = np.array([r[0] for r in res])
    gh = np.array([r[1] for r in res])
    succ = np.array([r[2] for r in res])
    ms = np.asarray(m_values, dtype=float)
    slopes = np.array([_loglog_slope(ms, g) for g in ge])
    return UniquenessReport(
        "mollification", "m", np.asarray(m_values), seeds, ge, gh, slopes,
        _loglog_slope(ms, ge.mean(axis=0)), successive_e=succ,
        noise=tuple(s.as_dict() for s in specs), config_digest=cfg.digest(),
        extra={"dt": sc.dt, "T": sc.T, "drift": eq.drift.describe(),
               "mollify_samples": samples, "mollify_seed": mseed})


def run_uniqueness(cfg: ExperimentConfig, workers: int | None = None) -> UniquenessReport:
    if cfg["uniqueness.route"] == "refinement":
        return run_uniqueness_refinement(cfg, workers)
    return run_uniqueness_mollification(cfg, workers)


# ---------------------------------------------------------------------------
# single trajectories and kernel tables


def run_simulation(cfg: ExperimentConfig) -> Trajectory:
    op = cfg.operator()
    eq = cfg.equation(op)
    path = NoisePath(cfg.noise()) if cfg["noise.enabled"] else None
    return solve_mild(eq, cfg.initial(op), path, cfg.solver())


@dataclass(frozen=True)
class KernelTable:
    times: np.ndarray
    max_kernel: np.ndarray
    min_kernel: np.ndarray
    bound: np.ndarray             # (4 pi t)^{-1/2}
    asymmetry: np.ndarray
    ultracontractive: np.ndarray  # sup_{|x|_H=1} |e^{tA} x|_E
    square_sum: np.ndarray        # sum_k e^{2 mu_k t} = sum_i |e^{tA} e_i|_H^2

    @property
    def ratio(self) -> np.ndarray:
        return self.max_kernel / self.bound

    def rows(self) -> list[dict]:
        out = []
        for name in ("max_kernel", "min_kernel", "bound", "ratio", "asymmetry",
                     "ultracontractive", "square_sum"):
            for t, v in zip(self.times, getattr(self, name)):
                out.append({"curve": name, "abscissa": t, "value": v})
        return out

    def summary(self) -> dict:
        return {"times": self.times.tolist(), "max_ratio": float(np.max(self.ratio)),
                "min_kernel": float(np.min(self.min_kernel))}


def kernel_table(op: SpectralOperator, times) -> KernelTable:
    times = np.asarray(times, dtype=float)
    cols = {k: [] for k in ("max", "min", "asym", "uc", "sq")}
    for t in times:
        K = heat_kernel(op, t)
        cols["max"].append(np.max(K))
        cols["min"].append(np.min(K))
        cols["asym"].append(np.max(np.abs(K - K.T)))
        cols["uc"].append(ultracontractive_norm(op, t))
        cols["sq"].append(np.sum(np.exp(2 * op.eigenvalues * t)))
    return KernelTable(times, np.array(cols["max"]), np.array(cols["min"]),
                       (4 * np.pi * times) ** -0.5, np.array(cols["asym"]),
                       np.array(cols["uc"]), np.array(cols["sq"]))


def run_kernels(cfg: ExperimentConfig) -> KernelTable:
    return kernel_table(cfg.operator(), cfg["kernels.times"])


# ---------------------------------------------------------------------------
# estimates


def parse_functional(text: str) -> TestFunctional:
    """``mode:k``, ``sup``, ``point:xi`` or ``<tanh|sin|sign>:k[:scale]``."""
    parts = [p.strip() for p in text.split(":")]
    try:
        kind = parts[0].lower()
        if kind == "mode" and len(parts) == 2:
            return mode_coefficient(int(parts[1]))
        if kind == "sup" and len(parts) == 1:
            return sup_norm()
        if kind == "point" and len(parts) == 2:
            return point_value(float(parts[1]))
        if kind in ("tanh", "sin", "sign") and len(parts) in (2, 3):
            scale = float(parts[2]) if len(parts) == 3 else 1.0
            return bounded_composite(kind, int(parts[1]), scale)
    except ValueError as exc:
        raise ConfigError(f"bad functional {text!r}: {exc}") from None
    raise ConfigError(f"bad functional {text!r}")


def parse_direction(op: SpectralOperator, text: str) -> np.ndarray:
    """``mode:k`` (the eigenfunction e_k) or ``const:c``."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "mode":
            return op.mode(int(arg))
        if kind == "const":
            return np.full(op.grid.n_points, float(arg))
    except ValueError as exc:
        raise ConfigError(f"bad direction {text!r}: {exc}") from None
    raise ConfigError(f"bad direction {text!r}")


@dataclass(frozen=True)
class EstimateRecord:
    experiment_id: str
    op: str
    params_digest: str
    result: EstimatorResult
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        mean = np.atleast_1d(self.result.mean)
        se = np.atleast_1d(self.result.stderr)
        out = [{"curve": "mean", "abscissa": i, "value": v} for i, v in enumerate(mean)]
        out += [{"curve": "stderr", "abscissa": i, "value": v} for i, v in enumerate(se)]
        return out

    def summary(self) -> dict:
        r = self.result
        return {"experiment_id": self.experiment_id, "op": self.op,
                "params_digest": self.params_digest,
                "mean": np.asarray(r.mean).tolist(), "stderr": np.asarray(r.stderr).tolist(),
                "n": r.n_samples, "seed": r.seed, **self.extra}


def run_estimate(cfg: ExperimentConfig, workers: int | None = None) -> EstimateRecord:
    op = cfg.operator()
    eq = cfg.equation(op)
    x = cfg.initial(op)
    workers = workers or cfg["run.workers"]
    kind = cfg["estimate.op"]
    kw = dict(dt=cfg["solver.dt"], seed=cfg["noise.seed"], workers=workers)
    t, n = cfg["estimate.t"], cfg["estimate.n"]
    extra: dict = {}
    if kind == "vectorial":
        Phi: HolderDrift | None = eq.drift
        if Phi is None:
            raise ConfigError("estimate.op=vectorial needs drift.variant as the functional")
        res = vectorial_Pt(eq.without_drift(), Phi, x, t, n, **kw)
    else:
        phi = parse_functional(cfg["estimate.phi"])
        if kind == "pt":
            res = estimate_Pt(eq, phi, x, t, n, noise_modes=cfg.noise_modes(), **kw)
        elif kind == "derivative":
            h = parse_direction(op, cfg["estimate.h"])
            res = bismut_elworthy_derivative(eq, phi, x, h, t, n, **kw)
        else:
            bound = cfg["estimate.phi_bound"] or None
            rr = estimate_resolvent(eq, phi, x, cfg["estimate.lambda"], n,
                                    tol=cfg["estimate.tol"], phi_bound=bound, **kw)
            res = rr.result
            extra = {"t_max": rr.t_max, "tail_bound": rr.tail_bound,
                     "error_budget": rr.error_budget}
    return EstimateRecord(f"estimate-{cfg.digest()}", kind, cfg.digest(), res, extra)


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
