import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmm_helmholtz.errors import (
    InvalidBox,
    InvalidSubdivision,
    NonAlignedInterface,
    NonMatchingPeriodicBoundary,
    PointOutsideMesh,
)
from hmm_helmholtz.mesh import AxisBox, Mesh2D, periodic_wrap, structured_mesh, uniform_refine

UNIT = AxisBox(0.0, 0.0, 1.0, 1.0)
G = AxisBox.square(0.25, 0.75)
OMEGA = AxisBox.square(0.375, 0.625)
D = AxisBox.square(0.25, 0.75)


def interior_edge_counts(mesh):
    edges = np.sort(mesh.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return counts


def test_axis_box_rejects_degenerate():
    with pytest.raises(InvalidBox):
        AxisBox(0, 0, 0, 1)


def test_smallest_mesh():
    m = structured_mesh(UNIT, 1)
    assert (m.n_triangles, m.n_vertices, len(m.boundary_edges)) == (2, 4, 4)


def test_standard_macro_mesh_counts():
    m = structured_mesh(G, 8, OMEGA)
    assert m.n_triangles == 128
    assert (m.region == 1).sum() == 32


def test_non_aligned_inclusion():
    with pytest.raises(NonAlignedInterface):
        structured_mesh(UNIT, 6, D)


def test_zero_subdivision():
    with pytest.raises(InvalidSubdivision):
        structured_mesh(UNIT, 0)


def test_boundary_normals_point_outward():
    m = structured_mesh(G, 4)
    mid = m.vertices[m.boundary_edges].mean(axis=1)
    center = np.array([0.5, 0.5])
    assert np.all(np.einsum("nd,nd->n", mid - center, m.boundary_normals) > 0)
    # Counterclockwise: the normal is the edge direction rotated clockwise.
    e = m.vertices[m.boundary_edges[:, 1]] - m.vertices[m.boundary_edges[:, 0]]
    rot = np.column_stack([e[:, 1], -e[:, 0]]) / np.linalg.norm(e, axis=1)[:, None]
    assert np.allclose(rot, m.boundary_normals)
    assert m.edge_lengths.sum() == pytest.approx(2.0)


@pytest.mark.parametrize("n", [1, 4, 8, 12])
def test_mesh_invariants(n):
    m = structured_mesh(G, n, OMEGA if n % 4 == 0 else None)
    assert np.all(m.areas > 0)
    assert m.areas.sum() == pytest.approx(G.area, rel=1e-12)
    counts = interior_edge_counts(m)
    assert set(counts.tolist()) <= {1, 2}
    assert (counts == 1).sum() == len(m.boundary_edges)
    assert m.h_max == pytest.approx(math.sqrt(2) * 0.5 / n)
    assert m.h_max == m.h_local.max()
    ratios = m.shape_ratios()
    assert np.ptp(ratios) < 1e-9 * ratios.max()
    if n % 4 == 0:
        assert m.region_area(1) == pytest.approx(OMEGA.area, rel=1e-12)


def test_interfaces_follow_mesh_edges():
    m = structured_mesh(UNIT, 8, D)
    # Every triangle is entirely inside or outside the closed inclusion.
    inside = D.inside(m.vertices[m.triangles].reshape(-1, 2)).reshape(-1, 3)
    assert np.array_equal(inside.all(axis=1), m.region == 1)


def test_mesh_is_immutable():
    m = structured_mesh(UNIT, 2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0
    with pytest.raises(Exception):
        m.n = 3


def test_periodic_wrap_single_square():
    p = periodic_wrap(structured_mesh(UNIT, 1))
    assert p.n_dofs == 1
    assert len(p.master_of) == 3
    assert set(p.master_of.values()) == {0}


def test_periodic_wrap_n4():
    m = structured_mesh(UNIT, 4)
    assert m.n_vertices == 25
    assert periodic_wrap(m).n_dofs == 16


@given(st.integers(min_value=1, max_value=24))
@settings(max_examples=20, deadline=None)
def test_periodic_dofs_equal_n_squared(n):
    p = periodic_wrap(structured_mesh(UNIT, n))
    assert p.n_dofs == n * n
    v = p.base.vertices
    for s, mst in p.master_of.items():
        shift = v[s] - v[mst]
        assert any(np.allclose(shift, t) for t in ([1, 0], [0, 1], [1, 1]))
    corners = [0, n, n * (n + 1), (n + 1) ** 2 - 1]
    assert len({int(p.master[c]) for c in corners}) == 1


def test_periodic_wrap_rejects_perturbed_boundary():
    m = structured_mesh(UNIT, 4)
    v = m.vertices.copy()
    v[4 * 5 + 4, 1] += 1e-3  # a vertex on the right side
    bad = Mesh2D(v, m.triangles, m.region, m.boundary_edges, m.boundary_normals, m.box)
    with pytest.raises(NonMatchingPeriodicBoundary):
        periodic_wrap(bad)


def test_uniform_refine_counts_and_tags():
    m = structured_mesh(UNIT, 1)
    r = uniform_refine(m)
    assert r.n_triangles == 8
    assert r.h_max == pytest.approx(math.sqrt(2) / 2)

    m = structured_mesh(UNIT, 4, D)
    r = uniform_refine(m)
    assert r.h_max == pytest.approx(m.h_max / 2)
    assert np.array_equal(r.region.reshape(-1, 4), np.repeat(m.region[:, None], 4, axis=1))
    assert np.all(r.areas > 0)
    assert r.region_area(1) == pytest.approx(D.area)
    counts = interior_edge_counts(r)
    assert (counts == 1).sum() == len(r.boundary_edges) == 32
    assert r.edge_lengths.sum() == pytest.approx(4.0)


def test_uniform_refine_matches_structured_periodicity():
    r = uniform_refine(uniform_refine(structured_mesh(UNIT, 2)))
    assert periodic_wrap(r).n_dofs == 64


def test_locate_and_outside():
    m = structured_mesh(UNIT, 3)
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5], [1 / 3, 0.1]])
    tri, bary = m.locate(pts)
    rec = np.einsum("ni,nid->nd", bary, m.vertices[m.triangles[tri]])
    assert np.allclose(rec, pts)
    with pytest.raises(PointOutsideMesh):
        m.locate(np.array([[1.5, 0.5]]))


def test_dump_csv(tmp_path):
    m = structured_mesh(G, 4, OMEGA)
    vpath, tpath = m.dump_csv(tmp_path)
    assert len(vpath.read_text().splitlines()) == 26
    lines = tpath.read_text().splitlines()
    assert lines[0] == "index,v0,v1,v2,region"
    assert len(lines) == 33
