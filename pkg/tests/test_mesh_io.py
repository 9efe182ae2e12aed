import numpy as np
import pytest

from geoslice import datasets as ds
from geoslice.exceptions import MeshError
from geoslice.io import load_tet_mesh, read_obj, read_tetgen, read_vtk, write_obj, write_tetgen, write_vtk
from geoslice.mesh import TetMesh, TriMesh, boundary_surface, select_base_vertices


def test_orientation_repaired():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    m = TetMesh(v, [[0, 2, 1, 3]])
    assert m.volumes[0] > 0


@pytest.mark.parametrize("tets", [[[0, 0, 1, 2]], [[0, 1, 2, 4]]])
def test_invalid_tets_rejected(tets):
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    with pytest.raises(MeshError):
        TetMesh(v, tets)


def test_flat_tet_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]])
    with pytest.raises(MeshError):
        TetMesh(v, [[0, 1, 2, 3]])


def test_box_volume_and_boundary():
    m = ds.make_box_mesh((4, 6, 8), 1.0)
    assert np.isclose(m.volume, 4 * 6 * 8)
    surf, _ = boundary_surface(m)
    assert surf.is_closed
    assert np.isclose(surf.area, 2 * (24 + 32 + 48))
    assert np.isclose(surf.signed_volume(), 4 * 6 * 8)


def test_bottom_selection():
    m = ds.make_box_mesh((4, 4, 4), 1.0)
    idx = select_base_vertices(m)
    assert np.all(m.vertices[idx, 2] == 0)
    assert len(idx) == 25
    assert list(select_base_vertices(m, [3, 1, 1])) == [1, 3]
    with pytest.raises(MeshError):
        select_base_vertices(m, [10_000])
    with pytest.raises(ValueError):
        select_base_vertices(m, "top")


def test_tetgen_round_trip(tmp_path):
    m = ds.make_cylinder_mesh(2.0, 3.0, 1.0)
    write_tetgen(tmp_path / "c", m, base=1)
    r = read_tetgen(tmp_path / "c.node")
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.tets, m.tets)
    assert load_tet_mesh(tmp_path / "c.ele").n_tets == m.n_tets


def test_vtk_round_trip(tmp_path):
    m = ds.make_box_mesh((2, 2, 2), 1.0)
    write_vtk(tmp_path / "b.vtk", m, point_data={"z": m.vertices[:, 2]})
    r = read_vtk(tmp_path / "b.vtk")
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.tets, m.tets)
    assert load_tet_mesh(tmp_path / "b.vtk").n_vertices == m.n_vertices


def test_missing_file(tmp_path):
    with pytest.raises(MeshError, match="cannot open"):
        load_tet_mesh(tmp_path / "none.vtk")


def test_malformed_vtk(tmp_path):
    p = tmp_path / "bad.vtk"
    p.write_text("# vtk DataFile Version 3.0\nx\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 2 float\n0 0\n")
    with pytest.raises(MeshError):
        read_vtk(p)


def test_obj_round_trip(tmp_path):
    s = ds.make_disk_surface(1.0, 0.3)
    write_obj(tmp_path / "d.obj", s)
    v, f = read_obj(tmp_path / "d.obj")
    assert np.array_equal(f, s.triangles)
    assert np.abs(v - s.vertices).max() < 1e-6


def test_trimesh_boundary_loops():
    s = ds.make_annulus_surface(0.5, 1.0, 0.1)
    loops = s.boundary_loops
    assert len(loops) == 2
    assert not s.is_closed
    flipped = s.flipped()
    assert np.allclose(flipped.face_normals, -s.face_normals)


def test_nonmanifold_surface_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1.0]])
    with pytest.raises(MeshError):
        TriMesh(v, [[0, 1, 2], [0, 1, 3], [0, 1, 4]])
