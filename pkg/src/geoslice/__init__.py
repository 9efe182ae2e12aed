"""Curved-layer slicing for multi-axis additive manufacturing.

The functional core lives in the submodules; :class:`CurvedLayerSlicer`,
:class:`PrintSequencer` and :class:`ToolpathPlanner` wrap it as
scikit-learn style estimators.
"""

from .collision import NozzleCone, PCSTable, compute_pcs_table, envelopes_intersect, sweep_envelope
from .exceptions import (DeadlockError, FloatingLayerError, GeosliceError, MeshError,
                         MeshQualityWarning, SolverError, TopologyWarning)
from .geodesic import (FieldParams, GeodesicDistanceField, build_laplacian, divergence, gradient,
                       geodesic_distance_field)
from .io import load_tet_mesh, read_obj, write_obj
from .layers import IGDS, LayerSet, decompose, extract_igds
from .mesh import TetMesh, TriMesh, select_base_vertices
from .metrics import layer_thickness, overhang_metrics
from .remesh import remesh_and_smooth
from .sequencing import (PrintSequence, SequenceMetrics, dpt, greedy, lpt, sequence_metrics,
                         validate_sequence)
from .skeleton import SkeletonTree, build_skeleton_tree
from .slicer import CurvedLayerSlicer, PrintSequencer, ToolpathPlanner
from .toolpath import PrintParams, Toolpath, extract_contours, plan_all, plan_layer, surface_geodesic

__version__ = "0.1.0"

__all__ = [
    "CurvedLayerSlicer", "DeadlockError", "FieldParams", "FloatingLayerError", "GeodesicDistanceField",
    "GeosliceError", "IGDS", "LayerSet", "MeshError", "MeshQualityWarning", "NozzleCone", "PCSTable",
    "PrintParams", "PrintSequence", "PrintSequencer", "SequenceMetrics", "SkeletonTree", "SolverError",
    "TetMesh", "Toolpath", "ToolpathPlanner", "TopologyWarning", "TriMesh", "build_laplacian",
    "build_skeleton_tree", "compute_pcs_table", "decompose", "divergence", "dpt", "envelopes_intersect",
    "extract_contours", "extract_igds", "geodesic_distance_field", "gradient", "greedy",
    "layer_thickness", "load_tet_mesh", "lpt", "overhang_metrics", "plan_all", "plan_layer",
    "read_obj", "remesh_and_smooth", "select_base_vertices", "sequence_metrics", "surface_geodesic",
    "sweep_envelope", "validate_sequence", "write_obj",
]
