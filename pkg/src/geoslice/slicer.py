"""Estimator facade over the slicing, sequencing and toolpath functions."""

import logging
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points, check_positive
from .collision import DEFAULT_HEIGHT, DEFAULT_SAMPLES, NozzleCone, compute_pcs_table
from .geodesic import FieldParams, geodesic_distance_field
from .layers import LayerSet, decompose
from .mesh import TetMesh, select_base_vertices
from .metrics import layer_thickness, overhang_metrics, previous_layers
from .remesh import remesh_and_smooth
from .sequencing import STRATEGIES, run_strategy, sequence_metrics
from .skeleton import build_skeleton_tree
from .toolpath import PrintParams, plan_all

logger = logging.getLogger(__name__)


class CurvedLayerSlicer(BaseEstimator):
    """Distance field, iso-surface layers, skeleton tree and layer metrics.

    Parameters
    ----------
    interval : float, default=1.0
        Distance between consecutive layers (mm).
    base : {"bottom"} or sequence of int, default="bottom"
    base_tolerance : float, optional
    time_scale, tol, boundary
        Forwarded to :class:`~geoslice.geodesic.FieldParams`.
    remesh : bool, default=False
        Run :func:`~geoslice.remesh.remesh_and_smooth` on every surface
        after the tree is built.
    target_edge : float, optional
        Remeshing edge length; defaults to the interval.
    remesh_iterations : int, default=3
    adjacency : {"slab", "surface-path"}, default="slab"
    metrics : bool, default=True
        Compute overhang and thickness reports.

    Attributes
    ----------
    phi_, source_, layers_, tree_, overhang_, thickness_, timings_
    """

    def __init__(self, interval=1.0, base="bottom", base_tolerance=None, time_scale=1.0, tol=1e-10,
                 boundary="absorbing", remesh=False, target_edge=None, remesh_iterations=3,
                 adjacency="slab", metrics=True):
        self.interval = interval
        self.base = base
        self.base_tolerance = base_tolerance
        self.time_scale = time_scale
        self.tol = tol
        self.boundary = boundary
        self.remesh = remesh
        self.target_edge = target_edge
        self.remesh_iterations = remesh_iterations
        self.adjacency = adjacency
        self.metrics = metrics

    def fit(self, X, y=None, source=None):
        if not isinstance(X, TetMesh):
            raise TypeError(f"expected a TetMesh, got {type(X).__name__}")
        d = check_positive(self.interval, "interval")
        timings = {}
        t0 = time.perf_counter()
        if source is None:
            source = select_base_vertices(X, self.base, self.base_tolerance)
        params = FieldParams(self.time_scale, self.tol, self.boundary)
        self.source_ = np.asarray(source, dtype=np.int64)
        self.phi_ = geodesic_distance_field(X, self.source_, params)
        timings["field"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        layers = decompose(X, self.phi_, d, self.source_)
        timings["extract"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        self.tree_ = build_skeleton_tree(layers, mode=self.adjacency)
        timings["tree"] = time.perf_counter() - t0

        if self.remesh:
            t0 = time.perf_counter()
            edge = d if self.target_edge is None else self.target_edge
            new = [[remesh_and_smooth(s, edge, self.remesh_iterations, X, self.phi_) for s in layer]
                   for layer in layers.layers]
            layers = LayerSet(layers.interval, new, X, layers.phi, layers.base)
            timings["remesh"] = time.perf_counter() - t0

        self.overhang_, self.thickness_ = {}, {}
        if self.metrics:
            t0 = time.perf_counter()
            for s in layers:
                prev = previous_layers(layers, s, self.tree_)
                self.overhang_[s.key] = overhang_metrics(s, prev, d)
                self.thickness_[s.key] = layer_thickness(s, prev, d)
            timings["metrics"] = time.perf_counter() - t0
        layers.timings = timings
        self.layers_ = layers
        self.mesh_ = X
        self.timings_ = timings
        return self

    def transform(self, X):
        """Layer index ``floor(phi / d)`` at query points (-1 outside the solid)."""
        check_is_fitted(self, "phi_")
        from .locate import TetLocator

        pts = check_points(X, "X")
        val = TetLocator(self.mesh_).interpolate(pts, self.phi_)
        out = np.full(len(pts), -1, dtype=np.int64)
        ok = np.isfinite(val)
        out[ok] = np.floor(val[ok] / self.interval + 1e-9).astype(np.int64)
        return out


class PrintSequencer(BaseEstimator):
    """Collision table and printing order for a fitted layer set.

    Parameters
    ----------
    strategy : {"lpt", "dpt", "greedy", "all"}, default="greedy"
    nozzle_angle : float, default=45.0
        Half-angle of the nozzle cone (degrees).
    nozzle_height : float, default=50.0
    boundary_samples : int, default=64
    envelope_axis : {"mean", "vertex"}, default="mean"

    Attributes
    ----------
    pcs_ : PCSTable
    sequence_ : PrintSequence
        Order of ``strategy`` (of greedy when ``strategy="all"``).
    sequences_, metrics_ : dict keyed by strategy
    """

    def __init__(self, strategy="greedy", nozzle_angle=45.0, nozzle_height=DEFAULT_HEIGHT,
                 boundary_samples=DEFAULT_SAMPLES, envelope_axis="mean"):
        self.strategy = strategy
        self.nozzle_angle = nozzle_angle
        self.nozzle_height = nozzle_height
        self.boundary_samples = boundary_samples
        self.envelope_axis = envelope_axis

    def fit(self, X, y=None, tree=None, pcs=None):
        layers = X.layers_ if isinstance(X, CurvedLayerSlicer) else X
        if tree is None:
            tree = X.tree_ if isinstance(X, CurvedLayerSlicer) else build_skeleton_tree(layers)
        names = STRATEGIES if self.strategy == "all" else (self.strategy,)
        for n in names:
            if n not in STRATEGIES:
                raise ValueError(f"strategy must be one of {STRATEGIES + ('all',)}, got {self.strategy!r}")
        cone = NozzleCone(self.nozzle_angle, self.nozzle_height)
        if pcs is None:
            pcs = compute_pcs_table(layers, cone, tree=tree, boundary_samples=self.boundary_samples,
                                    axis=self.envelope_axis)
        self.pcs_ = pcs
        self.tree_ = tree
        self.sequences_, self.metrics_ = {}, {}
        for n in names:
            seq = run_strategy(n, tree, pcs)
            self.sequences_[n] = seq
            self.metrics_[n] = sequence_metrics(seq, layers, tree, pcs, nozzle_angle=cone.half_angle)
        self.sequence_ = self.sequences_["greedy" if self.strategy == "all" else self.strategy]
        return self


class ToolpathPlanner(BaseEstimator):
    """Whole-part toolpath for a layer set and a printing sequence.

    Attributes
    ----------
    toolpath_ : Toolpath
    """

    def __init__(self, stepover=0.8, filament_radius=0.875, mu=1.0, feed=20.0, travel_clearance=5.0,
                 layer_height=0.6, time_scale=1.0):
        self.stepover = stepover
        self.filament_radius = filament_radius
        self.mu = mu
        self.feed = feed
        self.travel_clearance = travel_clearance
        self.layer_height = layer_height
        self.time_scale = time_scale

    @property
    def params(self):
        return PrintParams(self.filament_radius, self.stepover, self.mu, self.feed, self.travel_clearance,
                           self.layer_height)

    def fit(self, X, y=None, sequence=None, tree=None):
        layers = X.layers_ if isinstance(X, CurvedLayerSlicer) else X
        if tree is None and isinstance(X, CurvedLayerSlicer):
            tree = X.tree_
        if sequence is None:
            raise ValueError("a printing sequence is required")
        self.toolpath_ = plan_all(layers, sequence, self.params, tree, self.time_scale)
        return self

    def write(self, path):
        check_is_fitted(self, "toolpath_")
        self.toolpath_.write(path)
