"""Push-block dynamics on Gelfand-Tsetlin patterns driven by inhomogeneous pure-birth chains."""
from __future__ import annotations

from .birth_chain import TransitionTable, transition_density, transition_density_ode
from .errors import ConfigError, NumericalError, PushBlockError
from .interlacing import EvolvedGibbsMeasure, GTPattern, gibbs_measure, interlaces, sample_gibbs
from .kernel import KernelContext, KernelPoint, correlation_bruteforce, correlation_det, correlation_kernel
from .rates import RateField, homogeneous, make_rate_field
from .semigroups import TwoLevelState, doob_km_density, km_density, two_level_block_kernel

__all__ = [
    "ConfigError",
    "EvolvedGibbsMeasure",
    "GTPattern",
    "KernelContext",
    "KernelPoint",
    "NumericalError",
    "PushBlockError",
    "RateField",
    "TransitionTable",
    "TwoLevelState",
    "correlation_bruteforce",
    "correlation_det",
    "correlation_kernel",
    "doob_km_density",
    "gibbs_measure",
    "homogeneous",
    "interlaces",
    "km_density",
    "make_rate_field",
    "sample_gibbs",
    "transition_density",
    "transition_density_ode",
    "two_level_block_kernel",
]
