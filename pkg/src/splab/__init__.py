"""Numerical laboratory for singular projections of fractional Sobolev maps."""

from .energy import FractionalParams, Region, EnergyValue, gagliardo_energy, dirichlet_energy
from .grid import Box, Grid, Placement, SampledMap, glue_disjoint, make_grid, rescale_map, sample_map

__all__ = [
    "Box",
    "EnergyValue",
    "FractionalParams",
    "Grid",
    "Placement",
    "Region",
    "SampledMap",
    "dirichlet_energy",
    "gagliardo_energy",
    "glue_disjoint",
    "make_grid",
    "rescale_map",
    "sample_map",
]

__version__ = "0.1.0"
