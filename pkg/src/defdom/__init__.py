"""Finite elements on deformable domains with boundary perturbation calculus."""

import jax

jax.config.update("jax_enable_x64", True)

from .errors import (  # noqa: E402
    AssemblyError,
    ConfigurationError,
    ConstraintError,
    ConvergenceError,
    DefdomError,
    DescriptorError,
    GeometryError,
    MeshError,
    MeshParseError,
    MeshValidationError,
    SolverError,
    UsageError,
)
from .mesh import (  # noqa: E402
    Mesh2D,
    MeshQualityReport,
    build_channel_mesh,
    build_disk_mesh,
    build_square_mesh,
    load_mesh,
    quality,
    save_mesh,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "ConfigurationError",
    "ConstraintError",
    "ConvergenceError",
    "DefdomError",
    "DescriptorError",
    "GeometryError",
    "Mesh2D",
    "MeshError",
    "MeshParseError",
    "MeshQualityReport",
    "MeshValidationError",
    "SolverError",
    "UsageError",
    "build_channel_mesh",
    "build_disk_mesh",
    "build_square_mesh",
    "load_mesh",
    "quality",
    "save_mesh",
]
