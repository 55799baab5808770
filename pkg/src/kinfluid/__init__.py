"""Coupled kinetic-fluid simulation laboratory.

Solvers for a Fokker-Planck transport equation with fluid drag and an
electrostatic force, a regularized Poisson field solve, a compressible
isentropic Navier-Stokes step with artificial regularizations, a damped
Picard coupling loop, a mean-field particle integrator, and diagnostics
that audit conservation, growth and energy-balance estimates of the
coupled system.
"""

__version__ = "0.1.0"

from . import errors
from .grids import SpatialGrid, VelocityGrid, StencilSet, quadrature

__all__ = [
    "errors",
    "SpatialGrid",
    "VelocityGrid",
    "StencilSet",
    "quadrature",
    "__version__",
]
