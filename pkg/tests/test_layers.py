import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoslice import datasets as ds
from geoslice.layers import IGDS, TIE_EPS, base_surface, decompose, extract_igds, interpolate_point

from oracles import extraction_mismatches, random_tet_mesh


def test_interpolate_point_is_linear():
    p = interpolate_point(np.zeros(3), np.array([2.0, 0, 0]), 0.0, 4.0, 1.0)
    assert np.allclose(p, [0.5, 0, 0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_extraction_matches_brute_force(seed, level):
    rng = np.random.default_rng(seed)
    m = random_tet_mesh(rng)
    phi = rng.random(m.n_vertices)
    surfaces = extract_igds(m, phi, level, interval=1.0)
    assert extraction_mismatches(m, phi, level, surfaces, TIE_EPS) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_extraction_with_exact_ties(seed):
    rng = np.random.default_rng(seed)
    m = random_tet_mesh(rng)
    phi = np.round(rng.random(m.n_vertices) * 4) / 4
    surfaces = extract_igds(m, phi, 0.5, interval=1.0)
    assert extraction_mismatches(m, phi, 0.5, surfaces, TIE_EPS) == []


def test_single_tet_cases():
    m = ds.regular_tetrahedron()
    one = extract_igds(m, np.array([1.0, 0, 0, 0]), 0.5)
    assert len(one) == 1 and one[0].surface.n_triangles == 1
    two = extract_igds(m, np.array([1.0, 1, 0, 0]), 0.5)
    assert two[0].surface.n_triangles == 2
    assert extract_igds(m, np.array([1.0, 1, 1, 1]), 0.5) == []


def test_surface_normals_follow_increasing_field():
    m = ds.make_box_mesh((4, 4, 4), 1.0)
    s = extract_igds(m, m.vertices[:, 2], 1.7)
    assert len(s) == 1
    assert np.all(s[0].surface.face_normals[:, 2] > 0.999)
    assert np.isclose(s[0].area, 16.0)
    assert np.allclose(s[0].surface.vertices[:, 2], 1.7)


def test_components_split_and_ordered():
    m = ds.make_two_columns_mesh(radius=1.0, gap=2.0, height=3.0, h=0.5)
    s = extract_igds(m, m.vertices[:, 2], 1.5, layer_index=3)
    assert [x.key for x in s] == [(3, 1), (3, 2)]
    assert s[0].centroid[0] < s[1].centroid[0]


def test_decompose_box_layer_count(box):
    assert 38 <= box.layers.n_layers <= 40
    assert all(len(layer) == 1 for layer in box.layers.layers)
    assert box.layers.get((0, 1)).phi == 0.0


def test_decompose_rejects_bad_interval(box):
    with pytest.raises(ValueError):
        decompose(box.mesh, box.phi, 0.0)
    with pytest.raises(ValueError):
        decompose(box.mesh, box.phi, 1000.0)


def test_base_surface_is_bottom_face(box):
    b = base_surface(box.mesh, box.source)
    assert np.isclose(b.area, 400.0)
    assert np.all(b.surface.face_normals[:, 2] > 0.999)


def test_from_surface_wraps_trimesh():
    s = IGDS.from_surface(ds.make_disk_surface(1.0, 0.2), phi=2.0, layer_index=4, component_index=2)
    assert s.key == (4, 2)
    assert np.all(s.tet_ids == -1)
    assert s.source_edges.shape == (s.surface.n_vertices, 2)
