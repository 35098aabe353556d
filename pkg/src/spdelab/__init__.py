"""Spectral simulation and Monte Carlo analysis of 1-D stochastic reaction-diffusion
equations with bounded Hölder drifts."""
from .drift import BlowUp, HolderDrift, PolynomialReaction
from .noise import NoisePath, NoisePathSpec, sample_noise, stochastic_convolution
from .semigroup import EstimatorResult, TestFunctional
from .solver import Equation, SolverConfig, Trajectory, solve_mild
from .spectral import GridSpec, SpectralOperator, build_operator

__version__ = "0.1.0"

__all__ = [
    "BlowUp", "Equation", "EstimatorResult", "GridSpec", "HolderDrift", "NoisePath",
    "NoisePathSpec", "PolynomialReaction", "SolverConfig", "SpectralOperator", "TestFunctional",
    "Trajectory", "build_operator", "sample_noise", "solve_mild", "stochastic_convolution",
]
