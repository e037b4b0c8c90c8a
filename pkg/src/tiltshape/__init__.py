"""Hoverability analysis, tilt-angle planning and simulation for a rigid payload
carried by multirotors on passive tilt hinges."""

from .forceset import HfsQuery, RfsSpec, count_included, membership, support_points
from .platform import AllocationMaps, PlatformParams, build_allocation_maps
from .tiltopt import GridSpec, OptimConfig, PsoConfig, TiltTable, build_table

__version__ = "0.1.0"

__all__ = [
    "AllocationMaps",
    "GridSpec",
    "HfsQuery",
    "OptimConfig",
    "PlatformParams",
    "PsoConfig",
    "RfsSpec",
    "TiltTable",
    "build_allocation_maps",
    "build_table",
    "count_included",
    "membership",
    "support_points",
]
