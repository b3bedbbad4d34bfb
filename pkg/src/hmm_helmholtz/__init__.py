"""Heterogeneous multiscale method for high-contrast Helmholtz scattering in 2D."""

from .cell import CellConfig, CellSolution, CellSolver, mu_eff_eigen_oracle
from .fem import CoefficientField, FieldP1
from .macro import HmmSolution, MacroProblem, Scaling, reconstruct, solve_effective
from .mesh import AxisBox, Mesh2D, PeriodicMesh, periodic_wrap, structured_mesh, uniform_refine
from .reference import HeterogeneousProblem, solve_heterogeneous

__all__ = [
    "AxisBox", "CellConfig", "CellSolution", "CellSolver", "CoefficientField", "FieldP1",
    "HeterogeneousProblem", "HmmSolution", "MacroProblem", "Mesh2D", "PeriodicMesh", "Scaling",
    "mu_eff_eigen_oracle", "periodic_wrap", "reconstruct", "solve_effective", "solve_heterogeneous",
    "structured_mesh", "uniform_refine",
]
