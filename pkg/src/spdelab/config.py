"""Flat ``section.key = value`` experiment configuration.

A config file is plain text, one assignment per line, ``#`` starts a comment::

    experiment = uniqueness
    grid.n_points = 128
    drift.variant = running_max
    noise.seed = 42

Command-line ``--set key=value`` overrides are applied on top, after which every
value is parsed against a fixed schema. Unknown keys and unparsable values raise
``ConfigError``. A run is then a pure function of the resulting config.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from .drift import SCALARS, HolderDrift, PolynomialReaction, mollified, point_eval, pointwise
from .drift import running_max, running_max_abs
from .noise import NoisePathSpec
from .solver import Equation, SolverConfig
from .spectral import GridSpec, SpectralOperator, build_operator


class ConfigError(ValueError):
    """Malformed config file, unknown key or invalid value."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        v = text.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return v
    return parse


EXPERIMENTS = ("simulate", "uniqueness", "estimate", "verify", "kernels")

# key -> (parser, default). Defaults are the desk-scale profile.
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "experiment": (_choice(*EXPERIMENTS), "simulate"),
    "grid.n_points": (int, 128),
    "grid.boundary": (_choice("dirichlet", "neumann"), "dirichlet"),
    "grid.n_modes": (int, 64),
    "solver.dt": (float, 1e-4),
    "solver.T": (float, 1.0),
    "solver.blow_up_threshold": (float, 1e6),
    "solver.record_stride": (int, 100),
    "reaction.m": (int, 1),
    "reaction.alpha": (float, 1.0),
    "reaction.coeffs": (_floats, ()),
    "drift.variant": (_choice("none", "point_eval", "running_max", "running_max_abs",
                              "pointwise"), "none"),
    "drift.b": (_choice(*SCALARS), "power"),
    "drift.b_param": (float, 0.5),
    "drift.xi0": (float, 0.5),
    "drift.g": (_choice("sine", "constant"), "sine"),
    "drift.g_amplitude": (float, 1.0),
    "drift.mollify_m": (int, 0),
    "drift.mollify_samples": (int, 64),
    "drift.mollify_seed": (int, 0),
    "noise.seed": (int, 42),
    "noise.n_modes": (int, 0),
    "noise.enabled": (_bool, True),
    "initial.kind": (_choice("sine", "constant", "zero"), "sine"),
    "initial.amplitude": (float, 1.0),
    "initial.k": (int, 1),
    "estimate.op": (_choice("pt", "derivative", "resolvent", "vectorial"), "pt"),
    "estimate.phi": (str, "mode:1"),
    "estimate.h": (str, "mode:1"),
    "estimate.t": (float, 0.1),
    "estimate.n": (int, 10_000),
    "estimate.lambda": (float, 10.0),
    "estimate.tol": (float, 1e-3),
    "estimate.phi_bound": (float, 0.0),
    "uniqueness.route": (_choice("refinement", "mollification"), "refinement"),
    "uniqueness.levels": (int, 4),
    "uniqueness.m_values": (_ints, (4, 8, 16, 32)),
    "uniqueness.n_paths": (int, 1),
    "kernels.times": (_floats, (0.01, 0.05, 0.1, 0.5, 1.0)),
    "verify.profile": (_choice("quick", "full"), "full"),
    "output.dir": (str, "results"),
    "output.formats": (lambda s: tuple(_choice("csv", "json")(v) for v in s.split(",")),
                       ("csv", "json")),
    "run.workers": (int, 1),
}


def parse_text(text: str, source: str = "<string>") -> dict[str, str]:
    """Raw ``key -> value`` strings of a config file (no type checking yet)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed, validated view of a flat config."""

    values: dict = field(default_factory=dict)

    @classmethod
    def from_raw(cls, raw: dict[str, str]) -> "ExperimentConfig":
        values = {k: default for k, (_, default) in SCHEMA.items()}
        for key, text in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            parser = SCHEMA[key][0]
            try:
                values[key] = parser(text)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Iterable[str] = (),
             **extra: Any) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        if path is not None:
            p = Path(path)
            try:
                text = p.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config {p}: {exc}") from None
            raw.update(parse_text(text, str(p)))
        raw.update(parse_overrides(overrides))
        raw.update({k: str(v) for k, v in extra.items() if v is not None})
        return cls.from_raw(raw)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def replace(self, **updates: Any) -> "ExperimentConfig":
        """Copy with dotted keys given as ``section__key=value``."""
        values = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = v
        cfg = ExperimentConfig(values)
        cfg.validate()
        return cfg

    def validate(self):
        try:
            self.grid()
            self.solver()
            self.reaction()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self["run.workers"] < 1:
            raise ConfigError("run.workers must be >= 1")
        if self["estimate.n"] < 2:
            raise ConfigError("estimate.n must be >= 2")
        if self["uniqueness.levels"] < 1:
            raise ConfigError("uniqueness.levels must be >= 1")
        if self["uniqueness.n_paths"] < 1:
            raise ConfigError("uniqueness.n_paths must be >= 1")
        if self["noise.n_modes"] > self["grid.n_modes"]:
            raise ConfigError("noise.n_modes exceeds grid.n_modes")
        if self["drift.mollify_m"] > self["grid.n_modes"]:
            raise ConfigError("drift.mollify_m exceeds grid.n_modes")
        if self["uniqueness.route"] == "mollification" and any(
                m < 1 or m > self["grid.n_modes"] for m in self["uniqueness.m_values"]):
            raise ConfigError("uniqueness.m_values must lie in [1, grid.n_modes]")
        if any(not t > 0 for t in self["kernels.times"]):
            raise ConfigError("kernels.times must be positive")

    # -- builders ---------------------------------------------------------

    def grid(self) -> GridSpec:
        return GridSpec(self["grid.n_points"], self["grid.boundary"], self["grid.n_modes"])

    def operator(self) -> SpectralOperator:
        return build_operator(self.grid())

    def solver(self) -> SolverConfig:
        return SolverConfig(self["solver.dt"], self["solver.T"],
                            blow_up_threshold=self["solver.blow_up_threshold"],
                            record_stride=self["solver.record_stride"])

    def reaction(self) -> PolynomialReaction:
        return PolynomialReaction(self["reaction.m"], self["reaction.alpha"],
                                  self["reaction.coeffs"], self["solver.blow_up_threshold"])

    def drift(self, op: SpectralOperator, variant: str | None = None) -> HolderDrift | None:
        variant = variant or self["drift.variant"]
        if variant == "none":
            return None
        # b_param is the amplitude (sine), exponent (power, dist_z) or value (constant)
        b = SCALARS[self["drift.b"]](self["drift.b_param"])
        if variant == "point_eval":
            amp = self["drift.g_amplitude"]
            g = amp * (np.sin(np.pi * op.nodes) if self["drift.g"] == "sine"
                       else np.ones_like(op.nodes))
            B = point_eval(b, self["drift.xi0"], g)
        else:
            B = {"running_max": running_max, "running_max_abs": running_max_abs,
                 "pointwise": pointwise}[variant](b)
        m = self["drift.mollify_m"]
        if m:
            B = mollified(B, op, m, self["drift.mollify_samples"], self["drift.mollify_seed"])
        return B

    def equation(self, op: SpectralOperator | None = None) -> Equation:
        op = op or self.operator()
        return Equation(op, self.reaction(), self.drift(op))

    def initial(self, op: SpectralOperator) -> np.ndarray:
        kind, amp = self["initial.kind"], self["initial.amplitude"]
        if kind == "zero":
            return np.zeros(op.grid.n_points)
        if kind == "constant":
            return np.full(op.grid.n_points, amp)
        wave = np.sin if op.grid.boundary.value == "dirichlet" else np.cos
        return amp * wave(np.pi * self["initial.k"] * op.nodes)

    def noise_modes(self) -> int:
        return self["noise.n_modes"] or self["grid.n_modes"]

    def noise(self, level: int = 0, ou_level: int | None = None,
              seed: int | None = None) -> NoisePathSpec:
        sc = self.solver()
        return NoisePathSpec(self["noise.seed"] if seed is None else seed, sc.dt, sc.n_steps,
                             self.noise_modes(), level, ou_level)

    # -- provenance -------------------------------------------------------

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}

    def to_text(self) -> str:
        lines = []
        for k, v in sorted(self.values.items()):
            if isinstance(v, tuple):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self, exclude: Iterable[str] = ("run.workers", "output.dir",
                                               "output.formats")) -> str:
        skip = set(exclude)
        blob = json.dumps({k: v for k, v in self.as_dict().items() if k not in skip},
                          sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
