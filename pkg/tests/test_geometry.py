import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robinheat.errors import InvalidPolygon, NonObtuseUnachievable
from robinheat.geometry import (
    Interval,
    Polygon,
    build_mesh,
    disjoint_union,
    l_shape,
    mesh_quality,
    rectangle_grid,
    unit_square,
    write_mesh,
)

OBTUSE_TRIANGLE = ((0.0, 0.0), (1.0, 0.0), (0.5, 0.5 * math.tan(math.pi / 6)))


def test_unit_square_coarse_is_non_obtuse():
    mesh = build_mesh(unit_square(), 0.5, require_non_obtuse=True)
    q = mesh_quality(mesh)
    assert q.non_obtuse
    assert q.max_angle <= math.pi / 2 + 1e-12
    assert sum(f.measure for f in mesh.facets) == pytest.approx(4.0, abs=1e-12)


def test_interval_quality():
    q = mesh_quality(build_mesh(Interval(0, 1), 0.25))
    assert q.h_max == pytest.approx(0.25)
    assert q.non_obtuse


def test_two_right_triangles_have_right_angle():
    mesh = rectangle_grid(0, 1, 0, 1, 1, 1)
    q = mesh_quality(mesh)
    assert len(mesh.cells) == 2
    assert q.max_angle == pytest.approx(math.pi / 2, abs=1e-14)
    assert q.non_obtuse


def test_obtuse_triangle_is_flagged():
    mesh = build_mesh(Polygon(OBTUSE_TRIANGLE), 10.0)
    q = mesh_quality(mesh)
    assert len(mesh.cells) == 1
    assert q.max_angle == pytest.approx(2 * math.pi / 3)
    assert not q.non_obtuse


def test_obtuse_triangle_rejected_when_required():
    with pytest.raises(NonObtuseUnachievable):
        build_mesh(Polygon(OBTUSE_TRIANGLE), 0.1, require_non_obtuse=True)


def test_self_intersecting_polygon_rejected():
    with pytest.raises(InvalidPolygon):
        Polygon(((0, 0), (1, 1), (1, 0), (0, 1)))


def test_clockwise_polygon_rejected():
    with pytest.raises(InvalidPolygon):
        Polygon(((0, 0), (0, 1), (1, 1), (1, 0)))


def test_interval_boundary_atoms():
    mesh = build_mesh(Interval(0, 1), 0.1)
    assert [f.nodes for f in mesh.facets] == [(0,), (10,)]
    assert [float(f.normal[0]) for f in mesh.facets] == [-1.0, 1.0]
    assert all(f.measure == 1.0 for f in mesh.facets)


def test_l_shape_measures():
    mesh = build_mesh(l_shape(), 0.25, require_non_obtuse=True)
    assert mesh.boundary_measure == pytest.approx(8.0)
    assert mesh.cell_measures.sum() == pytest.approx(3.0)
    assert mesh.is_connected


def test_outward_normals_on_square():
    mesh = build_mesh(unit_square(), 0.25)
    for f in mesh.facets:
        mid = mesh.nodes[list(f.nodes)].mean(axis=0)
        # the outward normal points away from the centre
        assert np.dot(f.normal, mid - 0.5) > 0
        assert np.linalg.norm(f.normal) == pytest.approx(1.0)


def test_hexagon_delaunay_conforms():
    hexagon = Polygon(tuple((math.cos(k * math.pi / 3), math.sin(k * math.pi / 3))
                            for k in range(6)))
    mesh = build_mesh(hexagon, 0.2)
    assert mesh.boundary_measure == pytest.approx(6.0)
    assert mesh.cell_measures.sum() == pytest.approx(hexagon.area)
    assert mesh.is_connected


def test_disjoint_union_components():
    mesh = disjoint_union(build_mesh(Interval(0, 1), 0.25), build_mesh(Interval(2, 3), 0.25))
    assert len(np.unique(mesh.components())) == 2
    assert len(mesh.facets) == 4


def test_mesh_export(tmp_path):
    mesh = build_mesh(unit_square(), 0.5)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    text = path.read_text()
    assert f"# nodes {mesh.n_nodes}" in text
    assert f"# facets {len(mesh.facets)}" in text


@settings(max_examples=20, deadline=None)
@given(h=st.floats(min_value=0.04, max_value=0.5))
def test_refinement_monotone_on_square(h):
    coarse = mesh_quality(build_mesh(unit_square(), h))
    fine = mesh_quality(build_mesh(unit_square(), h / 2))
    assert fine.h_max <= coarse.h_max + 1e-12
    assert fine.non_obtuse


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-5, 5), length=st.floats(0.1, 5), h=st.floats(0.01, 1.0))
def test_interval_covers_domain(a, length, h):
    mesh = build_mesh(Interval(a, a + length), h)
    assert mesh.cell_measures.sum() == pytest.approx(length)
    assert mesh_quality(mesh).h_max <= h + 1e-12
