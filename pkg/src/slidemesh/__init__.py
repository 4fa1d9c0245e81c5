"""Stabilized incompressible flow on non-conforming sliding subdomain meshes."""

from .errors import (AssemblyError, ConfigurationError, GeometryError, LinearSolveError,
                     MaterialRangeError, OutputError, SlidemeshError, SolverDivergenceError)
from .forms import StabilizationConfig
from .material import Carreau, CrossWLF, Newtonian, PhysicalParams
from .mesh import Mesh, build_annulus_mesh, build_structured_quad_mesh
from .solver import (BoundaryCondition, InterfaceSpec, PressureAnchor, RigidRotation,
                     RunConfig, Solver)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "BoundaryCondition", "Carreau", "ConfigurationError", "CrossWLF",
    "GeometryError", "InterfaceSpec", "LinearSolveError", "MaterialRangeError", "Mesh",
    "Newtonian", "OutputError", "PhysicalParams", "PressureAnchor", "RigidRotation",
    "RunConfig", "SlidemeshError", "Solver", "SolverDivergenceError", "StabilizationConfig",
    "build_annulus_mesh", "build_structured_quad_mesh", "__version__",
]
