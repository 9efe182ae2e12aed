"""Adjacency of iso-distance surfaces across consecutive layers.

Two surfaces ``a`` (layer i) and ``b`` (layer i+1) are adjacent when they
bound the same connected piece of the slab ``i d < phi < (i+1) d``. Slab
membership is decided per tet on the clipped piece (a tet is in the slab
when its value range overlaps the open interval) and two slab tets are
joined through a shared face whose own value range overlaps it. Because the
field is linear per tet, the clipped pieces are convex and this flood fill
is exact.
"""

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .exceptions import FloatingLayerError, TopologyWarning
from .layers import TIE_EPS
from .mesh import boundary_surface

logger = logging.getLogger(__name__)

ADJACENCY_MODES = ("slab", "surface-path")


@dataclass
class SkeletonTree:
    """Layer adjacency graph with edges directed from layer i to i+1.

    ``nodes`` are ``(i, j)`` keys in sorted order; ``edges`` are
    ``(lower, upper)`` key pairs, also sorted.
    """

    nodes: list
    edges: list
    centroids: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.nodes = sorted(self.nodes)
        self.edges = sorted(set(self.edges))
        self._up = {k: [] for k in self.nodes}
        self._down = {k: [] for k in self.nodes}
        for a, b in self.edges:
            if b[0] != a[0] + 1:
                raise ValueError(f"edge {a}->{b} does not join consecutive layers")
            self._up[a].append(b)
            self._down[b].append(a)
        self._edge_set = set(self.edges)

    def upper_nodes(self, key):
        return list(self._up[tuple(key)])

    def lower_nodes(self, key):
        return list(self._down[tuple(key)])

    def has_edge(self, a, b):
        a, b = tuple(a), tuple(b)
        return (a, b) in self._edge_set or (b, a) in self._edge_set

    @property
    def roots(self):
        first = self.nodes[0][0] if self.nodes else 1
        return [k for k in self.nodes if k[0] == first]

    @property
    def leaves(self):
        return [k for k in self.nodes if not self._up[k]]

    @property
    def bifurcations(self):
        return [k for k in self.nodes if len(self._up[k]) > 1]

    @property
    def merges(self):
        return [k for k in self.nodes if len(self._down[k]) > 1]

    @property
    def n_cycles(self):
        """Independent undirected cycles (edges - nodes + components)."""
        n = len(self.nodes)
        if n == 0:
            return 0
        index = {k: q for q, k in enumerate(self.nodes)}
        a = [index[e[0]] for e in self.edges]
        b = [index[e[1]] for e in self.edges]
        g = sparse.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
        ncomp, _ = csgraph.connected_components(g, directed=False)
        return len(self.edges) - n + ncomp

    def to_dict(self):
        return {"nodes": [{"i": i, "j": j} for i, j in self.nodes],
                "edges": [[{"i": a[0], "j": a[1]}, {"i": b[0], "j": b[1]}] for a, b in self.edges]}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data):
        nodes = [(int(n["i"]), int(n["j"])) for n in data["nodes"]]
        edges = [((int(a["i"]), int(a["j"])), (int(b["i"]), int(b["j"]))) for a, b in data["edges"]]
        return cls(nodes, edges)


def _tie(values, level, d):
    s = values - level
    return np.where(np.abs(s) < TIE_EPS * d, TIE_EPS * d, s)


def slab_components(mesh, phi, lo, hi, d):
    """Label tets by connected piece of the open slab ``lo < phi < hi``.

    Returns an int array over tets; -1 for tets outside the slab.
    """
    above = _tie(phi, lo, d) > 0
    below = _tie(phi, hi, d) < 0
    t_in = above[mesh.tets].any(axis=1) & below[mesh.tets].any(axis=1)
    ft = mesh.face_tets
    fv = mesh.faces
    f_in = above[fv].any(axis=1) & below[fv].any(axis=1)
    inner = (ft[:, 1] >= 0) & f_in
    t0, t1 = ft[inner, 0], ft[inner, 1]
    keep = t_in[t0] & t_in[t1]
    m = mesh.n_tets
    g = sparse.coo_matrix((np.ones(keep.sum()), (t0[keep], t1[keep])), shape=(m, m))
    _, labels = csgraph.connected_components(g, directed=False)
    return np.where(t_in, labels, -1)


def _labels_of(s, labels):
    lab = labels[s.tet_ids]
    return set(int(x) for x in np.unique(lab[lab >= 0]))


def are_adjacent(a, b, mesh, phi, interval, labels=None):
    """Whether ``a`` (layer i) and ``b`` (layer i+1) bound one slab piece."""
    if b.layer_index != a.layer_index + 1:
        raise ValueError("surfaces must lie on consecutive layers")
    d = float(interval)
    if labels is None:
        labels = slab_components(mesh, np.asarray(phi, dtype=float), a.phi, b.phi, d)
    return bool(_labels_of(a, labels) & _labels_of(b, labels))


def _slab_edges(layers):
    mesh, phi, d = layers.mesh, layers.phi, layers.interval
    edges = []
    for i in range(1, layers.n_layers):
        lower, upper = layers.layer(i), layers.layer(i + 1)
        labels = slab_components(mesh, phi, i * d, (i + 1) * d, d)
        up_labels = [_labels_of(b, labels) for b in upper]
        for a in lower:
            la = _labels_of(a, labels)
            for b, lb in zip(upper, up_labels):
                if la & lb:
                    edges.append((a.key, b.key))
    return edges


def _surface_path_edges(layers):
    """Steepest ascent over boundary-surface vertices (cross-check mode).

    From the upper endpoint of each tet-mesh edge carrying a boundary
    vertex of ``a``, repeatedly step to the highest boundary neighbour until
    the next level is crossed; the surface of layer i+1 owning the crossed
    edge is adjacent to ``a``. Components without a boundary are linked to
    nothing by this mode.
    """
    mesh, phi, d = layers.mesh, layers.phi, layers.interval
    surf, parent = boundary_surface(mesh)
    adj = surf.vertex_adjacency().tocsr()
    sv_phi = phi[parent]
    local = {int(v): q for q, v in enumerate(parent)}
    edges = set()
    for i in range(1, layers.n_layers):
        level_up = (i + 1) * d
        owner = {}
        for b in layers.layer(i + 1):
            for e in b.source_edges[b.surface.boundary_vertex_mask]:
                owner[(int(min(e)), int(max(e)))] = b.key
        for a in layers.layer(i):
            mask = a.surface.boundary_vertex_mask
            for e in a.source_edges[mask]:
                lo, hi = (int(e[0]), int(e[1])) if phi[e[0]] < phi[e[1]] else (int(e[1]), int(e[0]))
                prev, cur = lo, hi
                for _ in range(surf.n_vertices):
                    if _tie(phi[cur], level_up, d) > 0:
                        key = owner.get((min(prev, cur), max(prev, cur)))
                        if key is not None:
                            edges.add((a.key, key))
                        break
                    q = local[cur]
                    nb = adj.indices[adj.indptr[q]:adj.indptr[q + 1]]
                    if nb.size == 0:
                        break
                    best = nb[np.argmax(sv_phi[nb])]
                    if sv_phi[best] <= phi[cur]:
                        break
                    prev, cur = cur, int(parent[best])
    return sorted(edges)


def build_skeleton_tree(layers, mode="slab", check_floating=True):
    """Skeleton tree of a :class:`~geoslice.layers.LayerSet`.

    Raises
    ------
    FloatingLayerError
        A surface above layer 1 has no adjacent surface below it.
    """
    if mode not in ADJACENCY_MODES:
        raise ValueError(f"mode must be one of {ADJACENCY_MODES}, got {mode!r}")
    if len(layers) == 0:
        raise ValueError("layer set is empty")
    edges = _slab_edges(layers) if mode == "slab" else _surface_path_edges(layers)
    nodes = [s.key for s in layers]
    tree = SkeletonTree(nodes, edges, centroids={s.key: s.centroid for s in layers})
    orphans = [k for k in tree.nodes if k[0] > 1 and not tree.lower_nodes(k)]
    if orphans and check_floating:
        raise FloatingLayerError(
            f"floating layer: {len(orphans)} surface(s) without support, first {orphans[0]}")
    cycles = tree.n_cycles
    if cycles:
        warnings.warn(f"layer adjacency has {cycles} cycle(s); sequencing treats it as a DAG",
                      TopologyWarning, stacklevel=2)
    logger.debug("skeleton: %d nodes, %d edges, %d leaves", len(tree.nodes), len(tree.edges),
                 len(tree.leaves))
    return tree
