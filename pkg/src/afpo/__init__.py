"""Actuarially fair Pareto optimal risk sharing on lattice loss distributions."""

from .dist import (
    CompoundPoissonSpec,
    ConfigurationError,
    LatticeDistribution,
    TruncationError,
    aggregate,
    compound_poisson,
    convolve,
    discretize_gamma,
    negbinom_pmf,
    point_mass,
)
from .pool import Participant, Pool, PoolError
from .preferences import CRRA, CustomModel, DisutilityModel, DomainError, ExponentialType
from .solver import (
    FixedPointReport,
    MultiplierCurve,
    SharingRule,
    SolverError,
    hilbert_distance,
    iterate,
    phi,
    phi1,
    phi2,
    psi,
    rule_at,
    verify_contraction,
)

__version__ = "0.1.0"

__all__ = [
    "CompoundPoissonSpec",
    "ConfigurationError",
    "LatticeDistribution",
    "TruncationError",
    "aggregate",
    "compound_poisson",
    "convolve",
    "discretize_gamma",
    "negbinom_pmf",
    "point_mass",
    "Participant",
    "Pool",
    "PoolError",
    "CRRA",
    "CustomModel",
    "DisutilityModel",
    "DomainError",
    "ExponentialType",
    "FixedPointReport",
    "MultiplierCurve",
    "SharingRule",
    "SolverError",
    "hilbert_distance",
    "iterate",
    "phi",
    "phi1",
    "phi2",
    "psi",
    "rule_at",
    "verify_contraction",
]
