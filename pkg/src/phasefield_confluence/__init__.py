"""Spherically symmetric phase field simulator for free-boundary confluence."""

__version__ = "0.1.0"

from .diagnostics import (
    BoundaryTrack,
    DipReport,
    analytic_jump,
    detect_dip,
    estimate_velocity,
    find_zero_crossings,
    track_boundaries,
)
from .model import (
    FieldPair,
    RunConfig,
    build_sigma0,
    build_u0,
    theta_from_sigma,
)
from .numerics import RadialMesh, TridiagonalSystem, build_mesh, sweep_solve
from .solver import RunRecord, StepReport, run_simulation, step_order_function, step_temperature
