"""Fine-scale solve of the heterogeneous high-contrast problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import NonAlignedInterface, UnresolvedInclusions
from .macro import MacroProblem, build_inclusion_layout, solve_with_coefficients
from .mesh import Mesh2D, _grid_index, structured_mesh

OUTSIDE, MATRIX, INCLUSION = 0, 1, 2


@dataclass(frozen=True)
class HeterogeneousProblem:
    macro: MacroProblem
    n_fine: int


def heterogeneous_mesh(problem: HeterogeneousProblem) -> Mesh2D:
    """Structured mesh of G with tags 0 (outside Omega), 1 (matrix), 2 (inclusions)."""
    macro = problem.macro
    base = structured_mesh(macro.G, problem.n_fine, macro.Omega)
    boxes = build_inclusion_layout(macro.Omega, macro.delta, macro.cell.D)
    dx = macro.G.width / problem.n_fine
    dy = macro.G.height / problem.n_fine
    try:
        for b in boxes:
            _grid_index(b.x_min, macro.G.x_min, dx, "inclusion x_min")
            _grid_index(b.x_max, macro.G.x_min, dx, "inclusion x_max")
            _grid_index(b.y_min, macro.G.y_min, dy, "inclusion y_min")
            _grid_index(b.y_max, macro.G.y_min, dy, "inclusion y_max")
    except NonAlignedInterface as exc:
        raise UnresolvedInclusions(
            f"n_fine={problem.n_fine} does not resolve the inclusions: {exc}") from exc
    region = base.region.copy()
    bary = base.vertices[base.triangles].mean(axis=1)
    for b in boxes:
        region[b.inside(bary)] = INCLUSION
    return Mesh2D(base.vertices, base.triangles, region, base.boundary_edges,
                  base.boundary_normals, base.box, base.n)


def heterogeneous_coefficients(problem: HeterogeneousProblem) -> fem.CoefficientField:
    macro = problem.macro
    cell = macro.cell
    a = {OUTSIDE: 1.0, MATRIX: cell.eps_e_inv, INCLUSION: macro.delta**2 * cell.eps_i_inv}
    return fem.CoefficientField(a=a, mu={OUTSIDE: 1.0, MATRIX: 1.0, INCLUSION: 1.0})


def solve_heterogeneous(problem: HeterogeneousProblem) -> tuple[fem.FieldP1, float]:
    """Reference field and its relative residual."""
    mesh = heterogeneous_mesh(problem)
    coeff = heterogeneous_coefficients(problem)
    used = {t: coeff.a[t] for t in np.unique(mesh.region)}
    coeff = fem.CoefficientField(a=used, mu={t: 1.0 for t in used})
    return solve_with_coefficients(mesh, coeff, problem.macro)
