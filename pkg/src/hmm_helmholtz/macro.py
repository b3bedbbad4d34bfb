"""Macroscopic effective Helmholtz problem and two-scale reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import fem
from .cell import CellConfig, CellSolution, CellSolver
from .errors import DomainMismatch
from .mesh import AxisBox, Mesh2D, structured_mesh
from .sparse import DirectSolver

DEFAULT_G = AxisBox.square(0.25, 0.75)
DEFAULT_OMEGA = AxisBox.square(0.375, 0.625)


class Scaling(str, Enum):
    UNSCALED = "unscaled"
    DELTA_SCALED = "delta_scaled"


@dataclass(frozen=True)
class MacroProblem:
    k: float
    n_macro: int
    cell: CellConfig = field(default_factory=CellConfig)
    G: AxisBox = DEFAULT_G
    Omega: AxisBox = DEFAULT_OMEGA
    delta: float = 1.0 / 32.0
    direction: tuple[float, float] = (-1.0, 0.0)
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.G.contains(self.Omega, strict=True):
            raise ValueError(f"scatterer {self.Omega} must lie strictly inside {self.G}")
        if self.k <= 0 or self.delta <= 0:
            raise ValueError("k and delta must be positive")

    def with_(self, **changes) -> "MacroProblem":
        return replace(self, **changes)

    def incident(self):
        return fem.plane_wave(self.k, self.direction, self.amplitude)

    def boundary_data(self) -> fem.BoundaryData:
        u, grad = self.incident()
        return fem.impedance_data(self.k, u, grad)

    def mesh(self) -> Mesh2D:
        return structured_mesh(self.G, self.n_macro, self.Omega)


@dataclass(frozen=True, eq=False)
class HmmSolution:
    u_H: fem.FieldP1
    cell: CellSolution
    problem: MacroProblem
    residual: float

    @property
    def k(self) -> float:
        return self.problem.k

    @property
    def delta(self) -> float:
        return self.problem.delta

    def gradient_corrector(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``u_{h,1}(x, y) = sum_j d_j u_H(x) w_j(y)`` (zero outside the scatterer)."""
        tri, _ = self.u_H.mesh.locate(x)
        grad = self.u_H.gradients()[tri]
        w = np.column_stack([fem.evaluate(wj, y) for wj in (self.cell.w1, self.cell.w2)])
        inside = self.u_H.mesh.region[tri] == 1
        return np.where(inside, np.sum(grad * w, axis=1), 0.0)

    def resonant_corrector(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``u_{h,2}(x, y) = k^2 u_H(x) w(y)``."""
        return self.k**2 * fem.evaluate(self.u_H, x) * fem.evaluate(self.cell.w, y)


def effective_coefficients(cell: CellSolution) -> fem.CoefficientField:
    """Region 1 (scatterer) gets (a_eff, mu_eff); region 0 the free-space values."""
    return fem.CoefficientField(a={0: np.eye(2), 1: cell.a_eff}, mu={0: 1.0, 1: cell.mu_eff})


def solve_with_coefficients(mesh: Mesh2D, coeff: fem.CoefficientField, problem: MacroProblem):
    A = fem.assemble_helmholtz(mesh, coeff, problem.k)
    b = fem.assemble_boundary_source(mesh, problem.boundary_data(), problem.k)
    solver = DirectSolver(A)
    x = solver.solve(b)
    return fem.FieldP1(mesh, x), solver.last_residual


def solve_effective(problem: MacroProblem, cell_solver: CellSolver | None = None,
                    cell: CellSolution | None = None) -> HmmSolution:
    """Cell solves followed by the effective macroscopic solve.

    ``cell_solver`` lets callers reuse k-independent corrector
    factorizations; ``cell`` skips the cell solves entirely.
    """
    if cell is None:
        cell_solver = cell_solver or CellSolver(problem.cell)
        cell = cell_solver.solve(problem.k)
    mesh = problem.mesh()
    u_H, res = solve_with_coefficients(mesh, effective_coefficients(cell), problem)
    return HmmSolution(u_H, cell, problem, res)


def build_inclusion_layout(Omega: AxisBox, delta: float, D: AxisBox | None) -> list[AxisBox]:
    """Boxes ``delta (j + D)`` for every integer j with ``delta (j + Y)`` inside Omega."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if D is None:
        return []
    eps = 1e-9

    def index_range(lo: float, hi: float) -> range:
        first = math.ceil(lo / delta - eps)
        last = math.floor(hi / delta + eps) - 1
        return range(first, last + 1)

    boxes = []
    for jy in index_range(Omega.y_min, Omega.y_max):
        for jx in index_range(Omega.x_min, Omega.x_max):
            boxes.append(AxisBox(delta * (jx + D.x_min), delta * (jy + D.y_min),
                                 delta * (jx + D.x_max), delta * (jy + D.y_max)))
    return boxes


def inclusion_indicator(points: np.ndarray, boxes: list[AxisBox]) -> np.ndarray:
    mask = np.zeros(len(points), dtype=bool)
    for b in boxes:
        mask |= b.inside(points)
    return mask


def reconstruct(solution: HmmSolution, eval_mesh: Mesh2D,
                scaling: Scaling | str = Scaling.UNSCALED) -> fem.FieldP1:
    """Zeroth-order reconstruction ``u_H + s chi_{D_delta} k^2 u_H w(x / delta)``.

    ``s = 1`` for the unscaled variant (two-scale limit), ``s = delta``
    for the delta-scaled one.
    """
    scaling = Scaling(scaling)
    problem = solution.problem
    if eval_mesh.box != solution.u_H.mesh.box:
        raise DomainMismatch(f"evaluation mesh covers {eval_mesh.box}, solution {solution.u_H.mesh.box}")
    x = eval_mesh.vertices
    uH = fem.evaluate(solution.u_H, x)
    boxes = build_inclusion_layout(problem.Omega, problem.delta, problem.cell.D)
    inside = inclusion_indicator(x, boxes)
    values = uH.copy()
    if inside.any():
        xi = x[inside] / problem.delta
        y = np.clip(xi - np.floor(xi), 0.0, 1.0)
        w = fem.evaluate(solution.cell.w, y)
        s = 1.0 if scaling is Scaling.UNSCALED else problem.delta
        values[inside] += s * problem.k**2 * uH[inside] * w
    return fem.FieldP1(eval_mesh, values)


def line_sample(field_: fem.FieldP1, y_line: float, n_samples: int) -> list[tuple[float, complex]]:
    """Uniform samples along the horizontal line ``y = y_line`` across the mesh box."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    box = field_.mesh.box
    xs = np.linspace(box.x_min, box.x_max, n_samples)
    pts = np.column_stack([xs, np.full(n_samples, float(y_line))])
    vals = fem.evaluate(field_, pts)
    return list(zip(xs.tolist(), vals.tolist()))


def core_box(Omega: AxisBox) -> AxisBox:
    """Centered sub-box of Omega with a quarter of its area."""
    cx, cy = 0.5 * (Omega.x_min + Omega.x_max), 0.5 * (Omega.y_min + Omega.y_max)
    hx, hy = 0.25 * Omega.width, 0.25 * Omega.height
    return AxisBox(cx - hx, cy - hy, cx + hx, cy + hy)


def decay_ratio(u: fem.FieldP1, Omega: AxisBox) -> float:
    """``||u||_{L2(core)} / ||u||_{L2(G minus Omega)}`` with triangles selected by barycenter."""
    mesh = u.mesh
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    core = core_box(Omega).inside(bary)
    outside = ~Omega.inside(bary)
    return _masked_l2(u, core) / _masked_l2(u, outside)


def _masked_l2(u: fem.FieldP1, mask: np.ndarray) -> float:
    v = u.values[u.mesh.triangles[mask]]
    per = np.sum(np.abs(v) ** 2, axis=1) + np.abs(v.sum(axis=1)) ** 2
    return float(np.sqrt((u.mesh.areas[mask] * per).sum() / 12.0))
