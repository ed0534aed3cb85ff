"""Statevector emulation of quantum Metropolis sampling and its quantum-walk variant
on the frustrated three-spin triangle."""

from .errors import (
    CapacityError,
    ConfigurationError,
    ConstructionError,
    DomainError,
    NumericalDegeneracyError,
    QtaError,
    ShapeError,
    ValidationError,
)
from .metrics import MetricsReport, sample_stats, scaling_fit, trace_distance
from .qms import QmsConfig, SampleSet, run_qms
from .qqma import QqmaConfig, build_szegedy, run_qqma
from .rng import RandomStream
from .triangle import (
    KickPolicy,
    gibbs_ensemble,
    markov_chain_analysis,
    spectrum,
    triangle_hamiltonian,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ConfigurationError",
    "ConstructionError",
    "DomainError",
    "KickPolicy",
    "MetricsReport",
    "NumericalDegeneracyError",
    "QmsConfig",
    "QqmaConfig",
    "QtaError",
    "RandomStream",
    "SampleSet",
    "ShapeError",
    "ValidationError",
    "build_szegedy",
    "gibbs_ensemble",
    "markov_chain_analysis",
    "run_qms",
    "run_qqma",
    "sample_stats",
    "scaling_fit",
    "spectrum",
    "trace_distance",
    "triangle_hamiltonian",
]
