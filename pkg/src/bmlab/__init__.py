"""Numerical laboratory for Besov-Morrey spaces and inhomogeneous Navier-Stokes iterates.

Modules
-------
spectral_core      periodic grids, fields, FFT operators, interpolation
littlewood_paley   dyadic blocks, paraproducts, commutators
morrey_norms       Morrey, Besov-Morrey and Chemin-Lerner norms
flow_transport     flow maps and transport by divergence-free velocities
stokes_solver      Stokes and linearized Navier-Stokes solvers
iteration_scheme   alternating transport / linearized-NS iteration
inequality_lab     empirical checks of the estimates
cli                ``bmlab`` command-line entry point
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BMLError,
    ConfigError,
    ContractionFailure,
    GridTooCoarse,
    InvalidFamily,
    InvalidField,
    InvalidParameter,
    NoContraction,
    ShapeError,
    SmallnessGateFailed,
    StepTooLarge,
)
from .morrey_norms import CheminLernerParams, MorreyConfig, SpaceParams  # noqa: E402
from .spectral_core import FieldSeries, GridSpec, PhysicalField, SpectralField  # noqa: E402

__all__ = [
    "BMLError", "ConfigError", "ContractionFailure", "GridTooCoarse", "InvalidFamily",
    "InvalidField", "InvalidParameter", "NoContraction", "ShapeError", "SmallnessGateFailed",
    "StepTooLarge", "CheminLernerParams", "MorreyConfig", "SpaceParams", "FieldSeries",
    "GridSpec", "PhysicalField", "SpectralField", "__version__",
]
