"""Immersed-boundary finite differences for acoustic waves over topography.

Boundaries are described by a signed distance field; near them, interior
finite-difference stencils are rewritten using Taylor-series extrapolants
constrained by the boundary conditions, so the time-stepping kernels never
change.
"""
from .basis import (BCKind, BCTerm, BoundaryConditionSpec, DerivativeVectorLayout, MultiIndexBasis,
                    bc_family, bc_row, build_basis, taylor_row)
from .errors import (ConfigError, DivergenceError, GeometryError, IBError, InternalError,
                     InvalidMatrix, NumericalFailure, UnconstrainableRegion)
from .geometry import (Arc, BoundaryPoint, CartesianGrid, Label, Plane, PointClassification,
                       SignedDistanceField, SineHill, classify_points, locate_boundary_points,
                       sdf_from_dem, sdf_from_function)
from .linalg import condition_number, numerical_rank, pseudoinverse
from .solver import (Material, Receiver, RickerSource, build_domain, build_operators, critical_dt,
                     ricker, run, step_first_order, step_second_order)
from .stencils import (DerivativeSpec, ModifiedStencil, Tap, assemble_system, constrain,
                       generate_operator_table, interior_stencil, modify_stencil)

__version__ = "0.1.0"

__all__ = ["BCKind", "BCTerm", "BoundaryConditionSpec", "DerivativeVectorLayout",
           "MultiIndexBasis", "bc_family", "bc_row", "build_basis", "taylor_row", "ConfigError",
           "DivergenceError", "GeometryError", "IBError", "InternalError", "InvalidMatrix",
           "NumericalFailure", "UnconstrainableRegion", "Arc", "BoundaryPoint", "CartesianGrid",
           "Label", "Plane", "PointClassification", "SignedDistanceField", "SineHill",
           "classify_points", "locate_boundary_points", "sdf_from_dem", "sdf_from_function",
           "condition_number", "numerical_rank", "pseudoinverse", "Material", "Receiver",
           "RickerSource", "build_domain", "build_operators", "critical_dt", "ricker", "run",
           "step_first_order", "step_second_order", "DerivativeSpec", "ModifiedStencil", "Tap",
           "assemble_system", "constrain", "generate_operator_table", "interior_stencil",
           "modify_stencil"]
