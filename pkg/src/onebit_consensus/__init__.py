"""Consensus of networked linear systems over noisy one-bit links."""
from .errors import ConsensusError, NumericalError, ValidationError
from .linsys import LinearSystem, GainPair, gains_for, to_brunovsky, zoh_discretize
from .topology import Graph, MarkovTopologyProcess
from .channel import LinkConfig, NoiseModel
from .engine import SimConfig, run, run_fixed, run_switching, run_replications
from .analysis import theorem_constants, check_report, rate_slope, difference_equation_oracle

__version__ = "0.1.0"

__all__ = [
    "ConsensusError",
    "NumericalError",
    "ValidationError",
    "LinearSystem",
    "GainPair",
    "gains_for",
    "to_brunovsky",
    "zoh_discretize",
    "Graph",
    "MarkovTopologyProcess",
    "LinkConfig",
    "NoiseModel",
    "SimConfig",
    "run",
    "run_fixed",
    "run_switching",
    "run_replications",
    "theorem_constants",
    "check_report",
    "rate_slope",
    "difference_equation_oracle",
]
