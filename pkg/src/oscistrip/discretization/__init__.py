"""Meshes, P1 operators and the cutoff nonlinearity."""
from .fem import FemBase, FemSystem, Norms, build_ladder, make_potential
from .mesh import Mesh, generate_curve_mesh, generate_disk_mesh
from .nonlinearity import Nonlinearity, make_nonlinearity

__all__ = [
    "FemBase", "FemSystem", "Mesh", "Nonlinearity", "Norms", "build_ladder",
    "generate_curve_mesh", "generate_disk_mesh", "make_nonlinearity", "make_potential",
]
