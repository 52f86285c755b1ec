"""Robust two-echelon truck-and-drone routing for post-disaster aid delivery.

Trucks carry drones along the surviving road network to satellite
stations; drones fly aid to communities whose demand is uncertain under
budgeted deviation sets. The solver pairs inner column generation (drone
routes) with outer column-and-constraint generation (worst-case demand
scenarios) and reports robust tours, flight plans, and delivery plans.
"""

from .driver import RunConfig, RunReport, run
from .instgen import GenSpec, generate
from .model import Instance, Reachability, build_reachability, validate_instance

__all__ = [
    "GenSpec",
    "Instance",
    "Reachability",
    "RunConfig",
    "RunReport",
    "build_reachability",
    "generate",
    "run",
    "validate_instance",
]

__version__ = "0.1.0"
