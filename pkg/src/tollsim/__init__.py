"""Deterministic freeway CTM simulator with toll-lane control and pricing."""

from . import control, core, equilibrium, kernels, node, pricing, sim
from .core import (
    CflViolation,
    DualGeometry,
    FreewayGeometry,
    FundamentalDiagram,
    GeometryError,
    RampSpec,
    RawLinkSpec,
    build_geometry,
    max_timestep,
    normalize,
    split_lanes,
    validate_geometry,
)
from .sim import DemandProfile, TrafficState, metrics, run, step

__version__ = "0.1.0"

__all__ = [
    "CflViolation",
    "DemandProfile",
    "DualGeometry",
    "FreewayGeometry",
    "FundamentalDiagram",
    "GeometryError",
    "RampSpec",
    "RawLinkSpec",
    "TrafficState",
    "build_geometry",
    "control",
    "core",
    "equilibrium",
    "kernels",
    "max_timestep",
    "metrics",
    "node",
    "normalize",
    "pricing",
    "run",
    "sim",
    "split_lanes",
    "step",
    "validate_geometry",
]
