"""Structured, interface-resolving triangulations of axis-aligned boxes.

Meshes are immutable: all arrays are flagged read-only at construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    InvalidBox,
    InvalidSubdivision,
    NonAlignedInterface,
    NonMatchingPeriodicBoundary,
    PointOutsideMesh,
)

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class AxisBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidBox(f"degenerate box {self}")

    @classmethod
    def square(cls, lo: float, hi: float) -> "AxisBox":
        return cls(lo, lo, hi, hi)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def is_square(self) -> bool:
        return abs(self.width - self.height) <= 1e-12 * max(self.width, self.height)

    def contains(self, other: "AxisBox", strict: bool = False) -> bool:
        if strict:
            return (other.x_min > self.x_min and other.y_min > self.y_min
                    and other.x_max < self.x_max and other.y_max < self.y_max)
        return (other.x_min >= self.x_min and other.y_min >= self.y_min
                and other.x_max <= self.x_max and other.y_max <= self.y_max)

    def inside(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of points in the closed box (enlarged by ``tol``)."""
        p = np.atleast_2d(points)
        return ((p[:, 0] >= self.x_min - tol) & (p[:, 0] <= self.x_max + tol)
                & (p[:, 1] >= self.y_min - tol) & (p[:, 1] <= self.y_max + tol))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Conforming triangulation with per-triangle region tags.

    ``region`` is 0 for the exterior / matrix material and 1 for the
    scatterer / inclusion. ``boundary_edges`` holds vertex pairs oriented
    counterclockwise around the domain, ``boundary_normals`` the matching
    outward unit normals.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: np.ndarray
    boundary_normals: np.ndarray
    box: AxisBox
    n: int | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _freeze(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "triangles", _freeze(np.asarray(self.triangles, dtype=np.int64)))
        object.__setattr__(self, "region", _freeze(np.asarray(self.region, dtype=np.int64)))
        object.__setattr__(self, "boundary_edges",
                           _freeze(np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)))
        object.__setattr__(self, "boundary_normals",
                           _freeze(np.asarray(self.boundary_normals, dtype=float).reshape(-1, 2)))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return _freeze(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def h_local(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.stack([np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)])
        return _freeze(lengths.max(axis=0))

    @property
    def h_max(self) -> float:
        return float(self.h_local.max())

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.vertices[self.boundary_edges]
        return _freeze(np.linalg.norm(e[:, 1] - e[:, 0], axis=1))

    def region_area(self, tag: int) -> float:
        return float(self.areas[self.region == tag].sum())

    def vertices_of_region(self, tag: int) -> np.ndarray:
        """Indices of vertices touched by at least one triangle carrying ``tag``."""
        return np.unique(self.triangles[self.region == tag])

    def shape_ratios(self) -> np.ndarray:
        """Circumradius over inradius for each triangle."""
        p = self.vertices[self.triangles]
        a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        area = np.abs(self.areas)
        circum = a * b * c / (4 * area)
        inrad = 2 * area / (a + b + c)
        return circum / inrad

    @cached_property
    def _locator(self) -> "_BucketLocator":
        return _BucketLocator(self)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric coordinates for each point.

        Raises PointOutsideMesh when any point lies outside every triangle.
        """
        return self._locator.locate(np.atleast_2d(np.asarray(points, dtype=float)))

    def dump_csv(self, directory: str | Path, stem: str = "mesh") -> tuple[Path, Path]:
        """Write ``<stem>_vertices.csv`` and ``<stem>_triangles.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        vpath = directory / f"{stem}_vertices.csv"
        tpath = directory / f"{stem}_triangles.csv"
        with vpath.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "x", "y"])
            for i, (x, y) in enumerate(self.vertices):
                w.writerow([i, f"{x:.17g}", f"{y:.17g}"])
        with tpath.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "v0", "v1", "v2", "region"])
            for i, (tri, tag) in enumerate(zip(self.triangles, self.region)):
                w.writerow([i, *tri.tolist(), int(tag)])
        return vpath, tpath


class _BucketLocator:
    """Uniform bucket grid over triangle bounding boxes."""

    def __init__(self, mesh: Mesh2D, tol: float = 1e-10):
        self.mesh = mesh
        self.tol = tol
        box = mesh.box
        nb = max(1, int(np.sqrt(mesh.n_triangles / 2)))
        self.nb = nb
        self.origin = np.array([box.x_min, box.y_min])
        self.cell = np.array([box.width / nb, box.height / nb])

        p = mesh.vertices[mesh.triangles]
        lo = self._bucket(p.min(axis=1) - tol)
        hi = self._bucket(p.max(axis=1) + tol)
        span = hi - lo + 1
        tri_ids, buckets = [], []
        for dx in range(int(span[:, 0].max())):
            for dy in range(int(span[:, 1].max())):
                ok = (dx < span[:, 0]) & (dy < span[:, 1])
                idx = np.nonzero(ok)[0]
                tri_ids.append(idx)
                buckets.append((lo[idx, 1] + dy) * nb + lo[idx, 0] + dx)
        tri_ids = np.concatenate(tri_ids)
        buckets = np.concatenate(buckets)
        order = np.lexsort((tri_ids, buckets))
        self.tri_ids = tri_ids[order]
        counts = np.bincount(buckets[order], minlength=nb * nb)
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.max_count = int(counts.max()) if counts.size else 0

        # Inverse of the affine map from the reference triangle.
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.inv = np.stack([np.stack([d2[:, 1], -d2[:, 0]], -1),
                             np.stack([-d1[:, 1], d1[:, 0]], -1)], 1) / det[:, None, None]
        self.p0 = p[:, 0]

    def _bucket(self, pts: np.ndarray) -> np.ndarray:
        ij = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        return np.clip(ij, 0, self.nb - 1)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = len(points)
        tri = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        inside_box = self.mesh.box.inside(points, tol=self.tol)
        if not inside_box.all():
            bad = points[~inside_box][0]
            raise PointOutsideMesh(f"point {bad.tolist()} outside mesh bounding box")
        b = self._bucket(points)
        bid = b[:, 1] * self.nb + b[:, 0]
        start = self.offsets[bid]
        count = self.offsets[bid + 1] - start
        best = np.full(n, -np.inf)
        for c in range(self.max_count):
            active = np.nonzero((c < count) & (best < -self.tol))[0]
            if active.size == 0:
                break
            t = self.tri_ids[start[active] + c]
            rel = points[active] - self.p0[t]
            lam12 = np.einsum("nij,nj->ni", self.inv[t], rel)
            lam = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
            score = lam.min(axis=1)
            better = score > best[active]
            sel = active[better]
            best[sel] = score[better]
            tri[sel] = t[better]
            bary[sel] = lam[better]
        if (best < -self.tol).any():
            bad = points[best < -self.tol][0]
            raise PointOutsideMesh(f"point {bad.tolist()} not inside any triangle")
        return tri, bary


def _grid_index(value: float, origin: float, step: float, what: str) -> int:
    q = (value - origin) / step
    r = round(q)
    if abs(q - r) > _ALIGN_TOL:
        raise NonAlignedInterface(f"{what}={value} is not on a grid line (offset {q} cells)")
    return int(r)


def structured_mesh(box: AxisBox, n: int, inner: AxisBox | None = None) -> Mesh2D:
    """n x n squares, each split along the same (south-west to north-east) diagonal.

    Triangles inside ``inner`` get region tag 1. Coordinates are computed
    as ``lo + (hi - lo) * i / n`` so that opposite sides match exactly.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidSubdivision(f"subdivision must be a positive integer, got {n!r}")
    n = int(n)
    t = np.arange(n + 1) / n
    xs = box.x_min + box.width * t
    ys = box.y_min + box.height * t
    xs[-1], ys[-1] = box.x_max, box.y_max
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    region = np.zeros(2 * n * n, dtype=np.int64)
    if inner is not None:
        dx, dy = box.width / n, box.height / n
        i0 = _grid_index(inner.x_min, box.x_min, dx, "inner.x_min")
        i1 = _grid_index(inner.x_max, box.x_min, dx, "inner.x_max")
        j0 = _grid_index(inner.y_min, box.y_min, dy, "inner.y_min")
        j1 = _grid_index(inner.y_max, box.y_min, dy, "inner.y_max")
        cell_in = (i >= i0) & (i < i1) & (j >= j0) & (j < j1)
        region = np.repeat(cell_in.astype(np.int64), 2)

    r = np.arange(n)
    bottom = np.column_stack([r, r + 1])
    right = np.column_stack([r * (n + 1) + n, (r + 1) * (n + 1) + n])
    top = np.column_stack([n * (n + 1) + r + 1, n * (n + 1) + r])[::-1]
    left = np.column_stack([(r + 1) * (n + 1), r * (n + 1)])[::-1]
    edges = np.vstack([bottom, right, top, left])
    normals = np.repeat(np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]), n, axis=0)
    return Mesh2D(vertices, triangles, region, edges, normals, box, n)


def uniform_refine(mesh: Mesh2D) -> Mesh2D:
    """Red refinement: every triangle is split into four congruent children."""
    tris = mesh.triangles
    nv = mesh.n_vertices
    local = np.array([[0, 1], [1, 2], [2, 0]])
    all_edges = np.sort(tris[:, local].reshape(-1, 2), axis=1)
    uniq, inverse = np.unique(all_edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1, 3)
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    m01, m12, m20 = (nv + inverse[:, k] for k in range(3))
    v0, v1, v2 = tris.T
    children = np.stack([
        np.column_stack([v0, m01, m20]),
        np.column_stack([m01, v1, m12]),
        np.column_stack([m20, m12, v2]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    region = np.repeat(mesh.region, 4)

    be = mesh.boundary_edges
    keys = np.sort(be, axis=1)
    # Locate each boundary edge in the unique edge table.
    edge_ids = {tuple(e): k for k, e in enumerate(uniq.tolist())}
    mid_ids = np.array([nv + edge_ids[tuple(e)] for e in keys.tolist()], dtype=np.int64)
    new_edges = np.stack([np.column_stack([be[:, 0], mid_ids]),
                          np.column_stack([mid_ids, be[:, 1]])], axis=1).reshape(-1, 2)
    new_normals = np.repeat(mesh.boundary_normals, 2, axis=0)
    n = None if mesh.n is None else 2 * mesh.n
    return Mesh2D(vertices, children, region, new_edges, new_normals, mesh.box, n)


@dataclass(frozen=True, eq=False)
class PeriodicMesh:
    """A mesh of a box whose opposite sides are identified (torus).

    ``master`` maps every vertex to its representative; vertices that are
    their own master carry degrees of freedom.
    """

    base: Mesh2D
    master: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "master", _freeze(np.asarray(self.master, dtype=np.int64)))

    @property
    def master_of(self) -> dict[int, int]:
        slaves = np.nonzero(self.master != np.arange(len(self.master)))[0]
        return {int(s): int(self.master[s]) for s in slaves}

    @cached_property
    def masters(self) -> np.ndarray:
        return _freeze(np.nonzero(self.master == np.arange(len(self.master)))[0])

    @property
    def n_dofs(self) -> int:
        return len(self.masters)

    @cached_property
    def dof_of_vertex(self) -> np.ndarray:
        """Compact dof index for every vertex (slaves share their master's dof)."""
        compact = np.full(len(self.master), -1, dtype=np.int64)
        compact[self.masters] = np.arange(len(self.masters))
        return _freeze(compact[self.master])


def periodic_wrap(mesh: Mesh2D, tol: float = 1e-12) -> PeriodicMesh:
    """Identify the right side with the left and the top with the bottom."""
    box = mesh.box
    v = mesh.vertices
    scale = max(box.width, box.height)
    atol = tol * scale
    on_left = np.abs(v[:, 0] - box.x_min) <= atol
    on_right = np.abs(v[:, 0] - box.x_max) <= atol
    on_bottom = np.abs(v[:, 1] - box.y_min) <= atol
    on_top = np.abs(v[:, 1] - box.y_max) <= atol

    def partners(src: np.ndarray, dst: np.ndarray, coord: int) -> np.ndarray:
        s_idx = np.nonzero(src)[0]
        d_idx = np.nonzero(dst)[0]
        if len(s_idx) != len(d_idx):
            raise NonMatchingPeriodicBoundary(
                f"{len(s_idx)} vertices on one side, {len(d_idx)} on the opposite side")
        s_sorted = s_idx[np.argsort(v[s_idx, coord], kind="stable")]
        d_sorted = d_idx[np.argsort(v[d_idx, coord], kind="stable")]
        gap = np.abs(v[s_sorted, coord] - v[d_sorted, coord])
        if (gap > atol).any():
            k = int(np.argmax(gap))
            raise NonMatchingPeriodicBoundary(
                f"vertex {int(s_sorted[k])} at {v[s_sorted[k]].tolist()} has no periodic partner")
        out = np.empty(len(v), dtype=np.int64)
        out[s_sorted] = d_sorted
        return out

    master = np.arange(len(v))
    right_partner = partners(on_right, on_left, 1)
    top_partner = partners(on_top, on_bottom, 0)
    master[on_right] = right_partner[on_right]
    master[on_top] = top_partner[on_top]
    while True:
        nxt = master[master]
        if np.array_equal(nxt, master):
            break
        master = nxt
    return PeriodicMesh(mesh, master)
