"""P1 finite elements for Helmholtz-type sesquilinear forms.

All volume forms use exact element integration: coefficients are constant
per region, so the gradient term is exact with one point and the mass
term with the classical ``|T|/12 (1 + delta_ij)`` element matrix.
Complex conjugation on the test function never touches the real P1 basis,
which makes every assembled matrix complex-symmetric (not Hermitian).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import DomainMismatch, MissingRegionCoefficient
from .mesh import Mesh2D
from .sparse import TripletBuffer, finalize

_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0
_EDGE_MASS_REF = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_GAUSS2 = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))

# Degree-5 rule on the reference triangle (barycentric coordinates, weights sum to 1).
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
_TRI7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
    [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2],
])
_TRI7_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


@dataclass(frozen=True, eq=False)
class FieldP1:
    """Nodal values of a continuous P1 function.

    ``values`` has one entry per mesh vertex. ``region`` restricts the
    support: norms then integrate only over triangles with that tag.
    """

    mesh: Mesh2D
    values: np.ndarray
    region: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.mesh.n_vertices,):
            raise DomainMismatch(f"{v.shape[0]} values for {self.mesh.n_vertices} vertices")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __mul__(self, c: complex) -> "FieldP1":
        return FieldP1(self.mesh, self.values * c, self.region)

    __rmul__ = __mul__

    def __add__(self, other: "FieldP1") -> "FieldP1":
        _check_same_mesh(self, other)
        return FieldP1(self.mesh, self.values + other.values, self.region)

    def __sub__(self, other: "FieldP1") -> "FieldP1":
        _check_same_mesh(self, other)
        return FieldP1(self.mesh, self.values - other.values, self.region)

    def triangle_mask(self, region: int | None = None) -> np.ndarray:
        region = self.region if region is None else region
        if region is None:
            return np.ones(self.mesh.n_triangles, dtype=bool)
        return self.mesh.region == region

    def gradients(self) -> np.ndarray:
        """Constant gradient on every triangle, shape (T, 2)."""
        grads = barycentric_gradients(self.mesh)
        return np.einsum("tid,ti->td", grads, self.values[self.mesh.triangles])

    def integral(self, region: int | None = None) -> complex:
        mask = self.triangle_mask(region)
        vals = self.values[self.mesh.triangles[mask]]
        return complex((self.mesh.areas[mask] * vals.sum(axis=1)).sum() / 3.0)


def _check_same_mesh(a: FieldP1, b: FieldP1) -> None:
    if a.mesh is not b.mesh:
        raise DomainMismatch("fields live on different meshes")


def interpolate(mesh: Mesh2D, func: Callable[[np.ndarray], np.ndarray], region: int | None = None) -> FieldP1:
    return FieldP1(mesh, func(mesh.vertices), region)


@dataclass
class CoefficientField:
    """Region-wise constant coefficients: a 2x2 matrix ``a`` and scalar ``mu`` per tag."""

    a: Mapping[int, np.ndarray] = field(default_factory=dict)
    mu: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self):
        a = {}
        for tag, val in self.a.items():
            m = np.asarray(val, dtype=complex)
            if m.ndim == 0:
                m = m * np.eye(2)
            if m.shape != (2, 2):
                raise ValueError(f"coefficient for region {tag} must be scalar or 2x2")
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise ValueError(f"coefficient for region {tag} is not symmetric")
            a[int(tag)] = m
        self.a = a
        self.mu = {int(t): complex(v) for t, v in self.mu.items()}

    @classmethod
    def uniform(cls, tags, a=1.0, mu=1.0) -> "CoefficientField":
        return cls({t: a for t in tags}, {t: mu for t in tags})

    def per_triangle_a(self, mesh: Mesh2D) -> np.ndarray:
        return _lookup(self.a, mesh.region, "a")

    def per_triangle_mu(self, mesh: Mesh2D) -> np.ndarray:
        return _lookup(self.mu, mesh.region, "mu")


def _lookup(table: Mapping[int, object], region: np.ndarray, name: str) -> np.ndarray:
    tags = np.unique(region)
    missing = [int(t) for t in tags if int(t) not in table]
    if missing:
        raise MissingRegionCoefficient(f"no '{name}' coefficient for region(s) {missing}")
    sample = np.asarray(next(iter(table.values())), dtype=complex)
    out = np.empty((len(region),) + sample.shape, dtype=complex)
    for t in tags:
        out[region == t] = table[int(t)]
    return out


def barycentric_gradients(mesh: Mesh2D) -> np.ndarray:
    """Gradients of the three hat functions per triangle, shape (T, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    two_area = 2.0 * mesh.areas
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        a = p[:, (i + 1) % 3]
        b = p[:, (i + 2) % 3]
        grads[:, i, 0] = (a[:, 1] - b[:, 1]) / two_area
        grads[:, i, 1] = (b[:, 0] - a[:, 0]) / two_area
    return grads


def _select(mesh: Mesh2D, mask: np.ndarray | None) -> np.ndarray:
    return np.arange(mesh.n_triangles) if mask is None else np.nonzero(mask)[0]


def stiffness_matrix(mesh: Mesh2D, a_tri: np.ndarray, mask: np.ndarray | None = None) -> sp.csr_matrix:
    """Stiffness matrix of ``int a grad u . grad v`` with ``a_tri`` of shape (T, 2, 2)."""
    sel = _select(mesh, mask)
    G = barycentric_gradients(mesh)[sel]
    blocks = np.einsum("tid,tde,tje->tij", G, a_tri[sel], G) * mesh.areas[sel, None, None]
    buf = TripletBuffer(mesh.n_vertices)
    buf.add_element_blocks(mesh.triangles[sel], blocks)
    return finalize(buf)


def mass_matrix(mesh: Mesh2D, weight_tri: np.ndarray | None = None,
                mask: np.ndarray | None = None) -> sp.csr_matrix:
    sel = _select(mesh, mask)
    w = np.ones(len(sel)) if weight_tri is None else np.asarray(weight_tri)[sel]
    blocks = (w * mesh.areas[sel])[:, None, None] * _MASS_REF
    buf = TripletBuffer(mesh.n_vertices)
    buf.add_element_blocks(mesh.triangles[sel], blocks)
    return finalize(buf)


def boundary_mass_matrix(mesh: Mesh2D) -> sp.csr_matrix:
    blocks = mesh.edge_lengths[:, None, None] * _EDGE_MASS_REF
    buf = TripletBuffer(mesh.n_vertices)
    buf.add_element_blocks(mesh.boundary_edges, blocks)
    return finalize(buf)


def load_vector(mesh: Mesh2D, weight_tri: np.ndarray | None = None,
                mask: np.ndarray | None = None) -> np.ndarray:
    """Entries ``int w phi_i`` for a region-wise constant ``w``."""
    sel = _select(mesh, mask)
    w = np.ones(len(sel)) if weight_tri is None else np.asarray(weight_tri)[sel]
    contrib = np.repeat((w * mesh.areas[sel] / 3.0)[:, None], 3, axis=1)
    return np.bincount(mesh.triangles[sel].ravel(), weights=contrib.real.ravel(),
                       minlength=mesh.n_vertices) + 1j * np.bincount(
        mesh.triangles[sel].ravel(), weights=np.imag(contrib).ravel(), minlength=mesh.n_vertices)


def assemble_helmholtz(mesh: Mesh2D, coeff: CoefficientField, k: float) -> sp.csr_matrix:
    """Galerkin matrix of ``int a grad u.grad v* - k^2 mu u v* - ik int_bdry u v*``."""
    K = stiffness_matrix(mesh, coeff.per_triangle_a(mesh))
    M = mass_matrix(mesh, coeff.per_triangle_mu(mesh))
    B = boundary_mass_matrix(mesh)
    A = (K - k**2 * M - 1j * k * B).tocsr()
    A.sort_indices()
    return A


BoundaryData = Callable[[np.ndarray, np.ndarray], np.ndarray]


def assemble_boundary_source(mesh: Mesh2D, g: BoundaryData, k: float | None = None) -> np.ndarray:
    """``int_bdry g phi_i`` with two-point Gauss quadrature per edge.

    ``g(points, normals)`` returns complex values at boundary points.
    ``k`` is accepted for signature symmetry with the assembly routine;
    boundary data closures already carry their wavenumber.
    """
    e = mesh.vertices[mesh.boundary_edges]
    L = mesh.edge_lengths
    rhs = np.zeros(mesh.n_vertices, dtype=complex)
    for t in _GAUSS2:
        pts = (1 - t) * e[:, 0] + t * e[:, 1]
        gv = np.asarray(g(pts, mesh.boundary_normals), dtype=complex) * (0.5 * L)
        for local, phi in ((0, 1 - t), (1, t)):
            idx = mesh.boundary_edges[:, local]
            rhs += np.bincount(idx, weights=(gv * phi).real, minlength=mesh.n_vertices)
            rhs += 1j * np.bincount(idx, weights=(gv * phi).imag, minlength=mesh.n_vertices)
    return rhs


def plane_wave(k: float, direction=(-1.0, 0.0), amplitude: complex = 1.0):
    """``u(x) = amplitude * exp(i k d.x)`` and its gradient; d = (-1, 0) gives exp(-i k x1)."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)

    def u(x: np.ndarray) -> np.ndarray:
        return amplitude * np.exp(1j * k * (np.atleast_2d(x) @ d))

    def grad(x: np.ndarray) -> np.ndarray:
        return 1j * k * u(x)[:, None] * d[None, :]

    return u, grad


def impedance_data(k: float, u: Callable, grad_u: Callable) -> BoundaryData:
    """Boundary data ``g = grad u . n - i k u`` for the impedance condition."""

    def g(points: np.ndarray, normals: np.ndarray) -> np.ndarray:
        return np.einsum("nd,nd->n", grad_u(points), normals) - 1j * k * u(points)

    return g


def _l2_squared(field: FieldP1, mask: np.ndarray) -> float:
    v = field.values[field.mesh.triangles[mask]]
    per = np.sum(np.abs(v) ** 2, axis=1) + np.abs(v.sum(axis=1)) ** 2
    return float((field.mesh.areas[mask] * per).sum() / 12.0)


def _grad_squared(field: FieldP1, mask: np.ndarray) -> float:
    g = field.gradients()[mask]
    return float((field.mesh.areas[mask] * np.sum(np.abs(g) ** 2, axis=1)).sum())


def norm_l2(field: FieldP1, region: int | None = None) -> float:
    return float(np.sqrt(_l2_squared(field, field.triangle_mask(region))))


def norm_grad(field: FieldP1, region: int | None = None) -> float:
    return float(np.sqrt(_grad_squared(field, field.triangle_mask(region))))


def norm_h1k(field: FieldP1, k: float, region: int | None = None) -> float:
    """``(||grad v||^2 + k^2 ||v||^2)^(1/2)``."""
    mask = field.triangle_mask(region)
    return float(np.sqrt(_grad_squared(field, mask) + k**2 * _l2_squared(field, mask)))


def boundary_l2_squared(field: FieldP1) -> float:
    v = field.values[field.mesh.boundary_edges]
    per = np.abs(v[:, 0]) ** 2 + np.abs(v[:, 1]) ** 2 + np.real(v[:, 0] * np.conj(v[:, 1]))
    return float((field.mesh.edge_lengths * per).sum() / 3.0)


def evaluate(field: FieldP1, points: np.ndarray) -> np.ndarray:
    """P1 interpolation at arbitrary points; raises PointOutsideMesh."""
    tri, bary = field.mesh.locate(points)
    return np.einsum("ni,ni->n", bary, field.values[field.mesh.triangles[tri]])


def cross_mesh_error(coarse: FieldP1, fine: FieldP1, k: float) -> tuple[float, float]:
    """L2 and H1_k norms of ``fine - I_fine(coarse)`` measured on the fine mesh."""
    if coarse.mesh.box != fine.mesh.box:
        raise DomainMismatch(f"coarse domain {coarse.mesh.box} != fine domain {fine.mesh.box}")
    diff = FieldP1(fine.mesh, fine.values - evaluate(coarse, fine.mesh.vertices))
    return norm_l2(diff), norm_h1k(diff, k)


def error_against_exact(field: FieldP1, u: Callable, grad_u: Callable, k: float) -> tuple[float, float]:
    """L2 and H1_k errors to an analytic function, by a degree-5 rule per triangle."""
    mesh = field.mesh
    p = mesh.vertices[mesh.triangles]
    vals = field.values[mesh.triangles]
    gh = field.gradients()
    l2 = 0.0
    g2 = 0.0
    for bary, w in zip(_TRI7_BARY, _TRI7_W):
        x = np.einsum("i,tid->td", bary, p)
        uh = vals @ bary
        l2 += w * np.sum(mesh.areas * np.abs(u(x) - uh) ** 2)
        g2 += w * np.sum(mesh.areas * np.sum(np.abs(grad_u(x) - gh) ** 2, axis=1))
    return float(np.sqrt(l2)), float(np.sqrt(g2 + k**2 * l2))


def write_field_csv(field: FieldP1, path: str | Path, header: list[str] | None = None) -> Path:
    """Vertex dump with columns x, y, re, im, abs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "re", "im", "abs"])
        for (x, y), val in zip(field.mesh.vertices, field.values):
            w.writerow([f"{x:.17g}", f"{y:.17g}", f"{val.real:.17g}", f"{val.imag:.17g}", f"{abs(val):.17g}"])
    return path
