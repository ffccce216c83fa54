"""Low-cycle-fatigue reliability and shape optimization on voxel meshes.

Modules: ``material`` (life chain), ``geometry`` (designs, constraints,
voxel meshes), ``elasticity`` (hex FEM), ``reliability`` (Weibull hazard and
crack point process), ``shapeopt`` (costs and pattern search), ``cli``.
"""

from .errors import (
    AssemblyError, ConfigError, ConstraintError, ConvergenceError, LcfError, MeshingError, SolverError,
)
from .material import MaterialParams, n_det, phi

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "ConfigError", "ConstraintError", "ConvergenceError", "LcfError",
    "MeshingError", "SolverError", "MaterialParams", "n_det", "phi",
]
