import numpy as np
import pytest

from geoslice import datasets as ds
from geoslice.exceptions import MeshError
from geoslice.layers import IGDS, extract_igds
from geoslice.remesh import remesh_and_smooth

QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


def _lengths(s):
    e, _ = s.surface.edges
    v = s.surface.vertices
    return np.linalg.norm(v[e[:, 0]] - v[e[:, 1]], axis=1)


@pytest.fixture(scope="module")
def square():
    m = ds.make_box_mesh(size=(10.0, 10.0, 4.0), cell=1.0)
    z = m.vertices[:, 2].copy()
    s = extract_igds(m, z, 2.3, interval=1.0, layer_index=2)[0]
    return m, z, s, remesh_and_smooth(s, 0.5, 3, mesh=m, phi=z)


def test_edges_reach_target(square):
    l = _lengths(square[3])
    assert np.mean((l >= 0.25) & (l <= 0.75)) >= 0.9


def test_planarity_and_extent_preserved(square):
    m, z, s, r = square
    assert np.abs(r.surface.vertices[:, 2] - 2.3).max() <= 1e-3
    assert np.isclose(r.area, s.area, rtol=1e-3)
    assert len(r.boundary_loops) == 1
    assert r.key == s.key and np.all(r.normals[:, 2] > 0.99)


def test_zero_iterations_is_identity(square):
    s = square[2]
    assert remesh_and_smooth(s, 0.5, 0) is s


def test_isotropic_mesh_is_stable(square):
    m, z, _, r = square
    again = remesh_and_smooth(r, 0.5, 3, mesh=m, phi=z)
    q1 = np.quantile(_lengths(r), QUANTILES)
    q2 = np.quantile(_lengths(again), QUANTILES)
    assert np.abs(q2 / q1 - 1).max() <= 0.05


def test_too_small_surface_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
    from geoslice.mesh import TriMesh

    with pytest.raises(MeshError):
        remesh_and_smooth(IGDS.from_surface(TriMesh(v, [[0, 1, 2]])), 0.5)


def test_bad_target_rejected(square):
    with pytest.raises(ValueError):
        remesh_and_smooth(square[2], 0.0)
