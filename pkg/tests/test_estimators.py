import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from geoslice import CurvedLayerSlicer, PrintSequencer, ToolpathPlanner
from geoslice import datasets as ds


@pytest.fixture(scope="module")
def fitted():
    return CurvedLayerSlicer(interval=1.0).fit(ds.make_box_mesh((6, 6, 8), 1.0))


def test_params_round_trip():
    est = CurvedLayerSlicer(interval=0.6, remesh=True)
    assert clone(est).get_params() == est.get_params()
    assert PrintSequencer(nozzle_angle=30).get_params()["nozzle_angle"] == 30
    assert ToolpathPlanner(mu=0.9).params.mu == 0.9


def test_slicer_attributes(fitted):
    assert fitted.layers_.n_layers in (7, 8)
    assert set(fitted.overhang_) == set(fitted.layers_.keys)
    assert set(fitted.timings_) >= {"field", "extract", "tree", "metrics"}


def test_transform_gives_layer_index(fitted):
    idx = fitted.transform(np.array([[3.0, 3.0, 2.5], [3.0, 3.0, 7.5], [99.0, 0, 0]]))
    assert list(idx) == [2, 7, -1]
    with pytest.raises(NotFittedError):
        CurvedLayerSlicer().transform(np.zeros((1, 3)))


def test_slicer_rejects_arrays():
    with pytest.raises(TypeError):
        CurvedLayerSlicer().fit(np.zeros((4, 3)))


def test_pipeline_with_remesh():
    m = ds.make_box_mesh((6, 6, 4), 1.0)
    sl = CurvedLayerSlicer(interval=1.0, remesh=True, target_edge=1.0, remesh_iterations=1).fit(m)
    assert "remesh" in sl.timings_
    for s in sl.layers_:
        assert np.abs(s.surface.vertices[:, 2] - s.phi).max() < 1e-3
    sq = PrintSequencer(strategy="all").fit(sl)
    assert set(sq.sequences_) == {"lpt", "dpt", "greedy"}
    assert sq.sequence_ is sq.sequences_["greedy"]
    tp = ToolpathPlanner().fit(sl, sequence=sq.sequence_)
    assert len(tp.toolpath_) > 0


def test_sequencer_validates_strategy(fitted):
    with pytest.raises(ValueError):
        PrintSequencer(strategy="zigzag").fit(fitted)


def test_planner_needs_sequence(fitted):
    with pytest.raises(ValueError):
        ToolpathPlanner().fit(fitted)
