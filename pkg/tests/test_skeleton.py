import json
import warnings

import numpy as np
import pytest

from geoslice import datasets as ds
from geoslice.exceptions import FloatingLayerError, MeshQualityWarning
from geoslice.layers import decompose
from geoslice.skeleton import SkeletonTree, build_skeleton_tree

from conftest import Sliced
from oracles import streamline_edges


def test_column_is_a_path(cylinder):
    t = cylinder.tree
    assert len(t.leaves) == 1 and not t.bifurcations
    assert len(t.edges) == len(t.nodes) - 1
    assert all(b[0] == a[0] + 1 for a, b in t.edges)


def test_three_branch_structure(three_branch):
    t = three_branch.tree
    assert len(t.leaves) == 3
    assert len(t.bifurcations) == 1
    assert len(t.upper_nodes(t.bifurcations[0])) == 3
    assert t.n_cycles == 0


def test_two_columns_give_two_roots(two_columns):
    t = two_columns.tree
    assert len(t.roots) == 2 and len(t.leaves) == 2


def test_surface_path_mode_agrees(three_branch):
    t = build_skeleton_tree(three_branch.layers, mode="surface-path")
    assert t.edges == three_branch.tree.edges


@pytest.mark.parametrize("make", [
    ds.make_two_columns_mesh,
    lambda: ds.make_three_branch_mesh(cell=2.0),
    lambda: ds.make_three_branch_mesh(cell=2.0, splay=0.3),
    lambda: ds.make_box_mesh(cell=4.0),
    lambda: ds.make_cylinder_mesh(h=3.0),
])
def test_adjacency_matches_streamlines(make):
    sl = Sliced(make())
    assert sl.mesh.n_tets <= 5000
    assert streamline_edges(sl.mesh, sl.phi, sl.layers) == set(sl.tree.edges)


def test_floating_layer_detected():
    m = ds.make_two_columns_mesh(radius=2.0, gap=2.0, height=8.0, h=1.0)
    phi = m.vertices[:, 2] + np.where(m.vertices[:, 0] > 3.0, 4.5, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MeshQualityWarning)
        layers = decompose(m, phi, 1.0)
    with pytest.raises(FloatingLayerError):
        build_skeleton_tree(layers)
    t = build_skeleton_tree(layers, check_floating=False)
    assert any(k[0] > 1 and not t.lower_nodes(k) for k in t.nodes)


def test_json_round_trip(three_branch, tmp_path):
    p = tmp_path / "t.json"
    three_branch.tree.to_json(p)
    r = SkeletonTree.from_dict(json.loads(p.read_text()))
    assert r.nodes == three_branch.tree.nodes and r.edges == three_branch.tree.edges


def test_non_consecutive_edge_rejected():
    with pytest.raises(ValueError):
        SkeletonTree([(1, 1), (3, 1)], [((1, 1), (3, 1))])


def test_unknown_mode(three_branch):
    with pytest.raises(ValueError):
        build_skeleton_tree(three_branch.layers, mode="nearest")
