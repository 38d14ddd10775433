"""Quenched branching processes in random environment.

Generating-function composition, extinction, Monte Carlo for the normalized
population, the quenched characteristic function of its limit and Fourier
inversion of that function to a density.
"""

from .charfn import (CharFnGrid, PathTooShortError, bound_suite, build_grid, h_bound, h_bound_check, h_function,
                     quenched_psi)
from .density import DensityEstimate, compare, invert_derivative, invert_direct, kde
from .env import (EnvironmentPath, EnvironmentProcess, OffspringDistribution, binary, explicit, gen_fn, geometric,
                  make_offspring, poisson, sample_path)
from .gf import classify, compose_F, extinction_prob, pmf_Z
from .sim import atom_and_moments, simulate_W, simulate_Z
from .smoothing import BernoulliMeasure, SmoothingSpec, bernoulli_charfn, decay_report, smoothing_iterate

__version__ = "0.1.0"

__all__ = [
    "BernoulliMeasure", "CharFnGrid", "DensityEstimate", "EnvironmentPath", "EnvironmentProcess",
    "OffspringDistribution", "PathTooShortError", "SmoothingSpec", "atom_and_moments", "bernoulli_charfn",
    "binary", "bound_suite", "build_grid", "classify", "compare", "compose_F", "decay_report", "explicit",
    "extinction_prob", "gen_fn", "geometric", "h_bound", "h_bound_check", "h_function", "invert_derivative",
    "invert_direct", "kde", "make_offspring", "pmf_Z", "poisson", "quenched_psi", "sample_path", "simulate_W",
    "simulate_Z", "smoothing_iterate",
]
