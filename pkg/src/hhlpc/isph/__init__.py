"""Two-dimensional incompressible SPH with a projection step."""

from .kernel import KernelSpec, kernel_grad_w, kernel_w
from .neighbors import NeighborTable, brute_force_neighbors, build_neighbors
from .solver import (
    BOUNDARY,
    FLUID,
    IsphParams,
    ParticleSystem,
    SimulationFailure,
    assemble_ppe,
    isph_step,
    stable_dt,
)

__all__ = [
    "BOUNDARY", "FLUID", "IsphParams", "KernelSpec", "NeighborTable", "ParticleSystem",
    "SimulationFailure", "assemble_ppe", "brute_force_neighbors", "build_neighbors",
    "isph_step", "kernel_grad_w", "kernel_w", "stable_dt",
]
