"""Phase-field (gradient-damage) fracture solver for quasi-brittle materials."""

from .material import MaterialParams, SplitState, split
from .mesh import Mesh, NotchedSquareSpec, generate_notched_square, load_mesh, save_mesh
from .solver import (
    BoundaryCondition,
    EnergyReport,
    FieldState,
    LoadProgram,
    RunHistory,
    StaggeredConfig,
    run_load_program,
    staggered_step,
)

__all__ = [
    "MaterialParams",
    "SplitState",
    "split",
    "Mesh",
    "NotchedSquareSpec",
    "generate_notched_square",
    "load_mesh",
    "save_mesh",
    "BoundaryCondition",
    "EnergyReport",
    "FieldState",
    "LoadProgram",
    "RunHistory",
    "StaggeredConfig",
    "run_load_program",
    "staggered_step",
]

__version__ = "0.1.0"
