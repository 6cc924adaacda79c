"""Random-field Hartree equation: steady states, linear response, perturbation dynamics."""

from .distributions import (
    MomentumDistribution,
    RadialProfile,
    SteadyStateParams,
    compute_Hf,
    compute_hf_profile,
    eval_f_squared,
    hf_L1_norm,
)
from .potentials import Potential
from .quadrature import QuadConfig
from .special import bessel_J

__all__ = [
    "MomentumDistribution",
    "Potential",
    "QuadConfig",
    "RadialProfile",
    "SteadyStateParams",
    "bessel_J",
    "compute_Hf",
    "compute_hf_profile",
    "eval_f_squared",
    "hf_L1_norm",
]
__version__ = "0.1.0"
