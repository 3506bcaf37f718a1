import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c1flow.mesh import (MeshError, build_interval_mesh, build_structured_triangulation,
                         clough_tocher_split, triangle_mesh)


def cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def test_interval_uniform_partition():
    m = build_interval_mesh(0.0, 1.0, 4)
    np.testing.assert_allclose(m.vertices[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert m.n_cells == 4


def test_interval_single_cell():
    m = build_interval_mesh(0.0, 1.0, 1)
    assert m.n_cells == 1 and m.h == 1.0


def test_interval_total_length():
    m = build_interval_mesh(0.0, 2.0, 8)
    assert m.h == pytest.approx(0.25)
    assert m.measures.sum() == pytest.approx(2.0, rel=1e-12)


def test_interval_boundary_normals_point_outward():
    m = build_interval_mesh(0.0, 1.0, 3)
    ends = {float(m.vertices[m.cells[c, f], 0]): n[0] for (c, f), n in
            zip(m.boundary_facets, m.boundary_normals)}
    assert ends == {0.0: -1.0, 1.0: 1.0}


@pytest.mark.parametrize("args", [(0.0, 1.0, 0), (1.0, 1.0, 3), (1.0, 0.0, 2)])
def test_interval_rejects_bad_arguments(args):
    with pytest.raises(MeshError):
        build_interval_mesh(*args)


def test_square_two_triangles():
    m = build_structured_triangulation(1, 1, 1, 1)
    assert m.n_cells == 2
    assert m.measures.sum() == pytest.approx(1.0)


def test_counts_two_by_two():
    m = build_structured_triangulation(1, 1, 2, 2)
    assert m.n_cells == 8 and m.n_vertices == 9


def test_diameter_of_half_square_triangle():
    m = build_structured_triangulation(2, 2, 4, 4)
    assert m.h == pytest.approx(0.5 * np.sqrt(2))


def test_diagonal_direction_and_orientation():
    m = build_structured_triangulation(1, 1, 1, 1)
    assert np.all(m.measures > 0)
    # both cells contain the (0,0)-(1,1) diagonal
    for cell in m.cells:
        pts = {tuple(p) for p in m.vertices[cell]}
        assert (0.0, 0.0) in pts and (1.0, 1.0) in pts


def test_boundary_edges_and_normals():
    m = build_structured_triangulation(2, 1, 4, 2)
    assert len(m.boundary_facets) == 2 * (4 + 2)
    np.testing.assert_allclose(np.linalg.norm(m.boundary_normals, axis=1), 1.0, atol=1e-12)
    for (c, f), n in zip(m.boundary_facets, m.boundary_normals):
        mid = m.vertices[[m.cells[c, f], m.cells[c, (f + 1) % 3]]].mean(axis=0)
        centroid = m.vertices[m.cells[c]].mean(axis=0)
        assert n @ (mid - centroid) > 0


def test_interior_edges_shared_by_two_cells():
    m = build_structured_triangulation(1, 1, 3, 3)
    interior = m.edge_cells[:, 1] >= 0
    assert interior.sum() == len(m.edges) - len(m.boundary_edges)
    assert np.all(m.edge_cells[interior, 0] < m.edge_cells[interior, 1])


@given(lx=st.floats(0.1, 10), ly=st.floats(0.1, 10), nx=st.integers(1, 6), ny=st.integers(1, 6))
@settings(max_examples=30, deadline=None)
def test_area_conservation_and_validity(lx, ly, nx, ny):
    m = build_structured_triangulation(lx, ly, nx, ny)
    m.validate()
    assert m.measures.sum() == pytest.approx(lx * ly, rel=1e-12)
    assert len(m.edges) == m.n_vertices + m.n_cells - 1  # Euler characteristic of a disc


def _shape_ratio(m):
    V = m.cell_coords
    a = np.linalg.norm(V[:, 1] - V[:, 2], axis=1)
    b = np.linalg.norm(V[:, 2] - V[:, 0], axis=1)
    c = np.linalg.norm(V[:, 0] - V[:, 1], axis=1)
    area = m.measures
    R = a * b * c / (4 * area)
    r = 2 * area / (a + b + c)
    return R / r


def test_shape_regularity_constant_under_refinement():
    ratios = [_shape_ratio(build_structured_triangulation(1, 1, n, n)).max() for n in (1, 2, 4, 8)]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_clough_tocher_reference_triangle():
    m = triangle_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    s = clough_tocher_split(m, 0)
    np.testing.assert_allclose(s.barycenter, [1 / 3, 1 / 3])
    areas = [0.5 * abs(cross2(t[1] - t[0], t[2] - t[0])) for t in s.subtriangles]
    np.testing.assert_allclose(areas, 1 / 6, rtol=1e-12)


def test_clough_tocher_is_bitwise_repeatable(rng):
    V = rng.uniform(size=(3, 2))
    V = V if cross2(V[1] - V[0], V[2] - V[0]) > 0 else V[[0, 2, 1]]
    m = triangle_mesh(V, [[0, 1, 2]])
    a, b = clough_tocher_split(m, 0), clough_tocher_split(m, 0)
    assert np.array_equal(a.subtriangles, b.subtriangles)
    assert np.array_equal(a.barycenter, V.mean(axis=0))


def test_clough_tocher_area_sum_random(rng):
    m = build_structured_triangulation(1.3, 0.7, 3, 2)
    for c in range(m.n_cells):
        s = clough_tocher_split(m, c)
        total = sum(0.5 * cross2(t[1] - t[0], t[2] - t[0]) for t in s.subtriangles)
        assert total == pytest.approx(m.measures[c], rel=1e-12)


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError):
        triangle_mesh([[0, 0], [1, 1], [2, 2]], [[0, 1, 2]])


def test_clockwise_triangle_rejected():
    with pytest.raises(MeshError):
        triangle_mesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])


def test_split_rejects_1d_and_bad_index():
    with pytest.raises(MeshError):
        clough_tocher_split(build_interval_mesh(0, 1, 2), 0)
    with pytest.raises(MeshError):
        clough_tocher_split(build_structured_triangulation(1, 1, 1, 1), 5)


def test_hanging_vertex_rejected():
    # vertex 3 sits in the middle of the long edge of the first triangle
    V = [[0, 0], [2, 0], [0, 2], [1, 0], [1, -1]]
    with pytest.raises(MeshError):
        triangle_mesh(V, [[0, 1, 2], [0, 4, 3]])
