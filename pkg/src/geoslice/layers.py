"""Iso-distance surface extraction (marching tetrahedra) and layer sets."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ._validation import check_field, check_positive
from .mesh import TET_EDGES, TetMesh, TriMesh, boundary_surface

TIE_EPS = 1e-9


def interpolate_point(v_i, v_j, phi_i, phi_j, phi):
    """Point on edge (v_i, v_j) where the linear field equals ``phi``."""
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    if phi_i == phi_j:
        raise ValueError("edge endpoints carry the same value")
    lo, hi = min(phi_i, phi_j), max(phi_i, phi_j)
    if not lo <= phi <= hi:
        raise ValueError(f"value {phi} is outside the edge range [{lo}, {hi}]")
    return (abs(phi_i - phi) * v_j + abs(phi_j - phi) * v_i) / abs(phi_i - phi_j)


@dataclass(eq=False)
class IGDS:
    """One connected iso-distance surface, i.e. one printing layer component.

    Attributes
    ----------
    surface : TriMesh
        Oriented so normals point toward increasing distance.
    phi : float
        Distance value of the surface (mm).
    layer_index, component_index : int
        ``(i, j)``; layer 0 is reserved for the base region of the boundary.
    tet_ids : ndarray of int
        Generating tet of each triangle.
    source_edges : ndarray of int, shape (n_vertices, 2)
        Tet-mesh edge each surface vertex was interpolated on.
    """

    surface: TriMesh
    phi: float
    layer_index: int
    component_index: int
    tet_ids: np.ndarray
    source_edges: np.ndarray

    @property
    def key(self):
        return (self.layer_index, self.component_index)

    @property
    def name(self):
        return f"{self.layer_index}_{self.component_index}"

    @property
    def normals(self):
        return self.surface.normals

    @property
    def boundary_loops(self):
        return self.surface.boundary_loops

    @cached_property
    def centroid(self):
        return self.surface.centroid

    @cached_property
    def area(self):
        return self.surface.area

    @cached_property
    def bounds(self):
        v = self.surface.vertices
        return v.min(axis=0), v.max(axis=0)

    @classmethod
    def from_surface(cls, surface, phi=0.0, layer_index=1, component_index=1):
        """Wrap a bare TriMesh (no generating tets), e.g. for planar fixtures."""
        n = surface.n_vertices
        return cls(surface=surface, phi=float(phi), layer_index=int(layer_index),
                   component_index=int(component_index),
                   tet_ids=np.full(surface.n_triangles, -1, dtype=np.int64),
                   source_edges=np.full((n, 2), -1, dtype=np.int64))

    def __repr__(self):
        return (f"IGDS(i={self.layer_index}, j={self.component_index}, phi={self.phi:.4g}, "
                f"n_triangles={self.surface.n_triangles})")


@dataclass(eq=False)
class LayerSet:
    """All iso-distance surfaces sampled at ``d, 2d, ...``.

    ``layers[k]`` holds the components of layer ``k + 1``; ``base`` is the
    layer-0 pseudo-surface made of boundary faces lying on the source set.
    """

    interval: float
    layers: list
    mesh: TetMesh
    phi: np.ndarray
    base: IGDS = None
    timings: dict = field(default_factory=dict)

    @property
    def n_layers(self):
        return len(self.layers)

    def __iter__(self):
        for layer in self.layers:
            yield from layer

    def __len__(self):
        return sum(len(layer) for layer in self.layers)

    def get(self, key):
        i, j = key
        if i == 0:
            return self.base
        return self.layers[i - 1][j - 1]

    def layer(self, i):
        if i == 0:
            return [self.base] if self.base is not None else []
        if 1 <= i <= len(self.layers):
            return self.layers[i - 1]
        return []

    @property
    def keys(self):
        return [s.key for s in self]


def _tie_break(phi, level, scale):
    shifted = np.asarray(phi, dtype=float) - level
    eps = TIE_EPS * scale
    return np.where(np.abs(shifted) < eps, eps, shifted)


def _triangles_per_tet(mesh, s, tets):
    """Crossing-edge triangles for the straddling ``tets``.

    Returns (tet index per triangle, (t, 3) array of *global edge ids*).
    """
    local = s[mesh.tets[tets]] > 0  # (k, 4)
    n_above = local.sum(axis=1)
    te = mesh.tet_edges[tets]
    edge_of = {}
    for e, (a, b) in enumerate(TET_EDGES):
        edge_of[(a, b)] = edge_of[(b, a)] = e
    out_t, out_e = [], []
    single = (n_above == 1) | (n_above == 3)
    if single.any():
        idx = np.flatnonzero(single)
        odd = np.where(n_above[idx, None] == 1, local[idx], ~local[idx])
        apex = np.argmax(odd, axis=1)
        for a in range(4):
            rows = idx[apex == a]
            if rows.size == 0:
                continue
            others = [v for v in range(4) if v != a]
            cols = [edge_of[(a, b)] for b in others]
            out_t.append(rows)
            out_e.append(te[rows][:, cols])
    double = n_above == 2
    if double.any():
        idx = np.flatnonzero(double)
        for rows_mask_pair in _pairs():
            (a, b), (c, d) = rows_mask_pair
            sel = local[idx][:, a] & local[idx][:, b]
            rows = idx[sel]
            if rows.size == 0:
                continue
            # quad cycle: a-c, a-d, b-d, b-c
            cyc = te[rows][:, [edge_of[(a, c)], edge_of[(a, d)], edge_of[(b, d)], edge_of[(b, c)]]]
            out_t.append(rows)
            out_e.append(cyc)
    return out_t, out_e


def _pairs():
    yield from (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)),
                ((1, 2), (0, 3)), ((1, 3), (0, 2)), ((2, 3), (0, 1)))


def extract_igds(mesh, phi_field, phi, interval=None, layer_index=0):
    """Extract the connected iso-surfaces ``{x : phi_field(x) = phi}``.

    Parameters
    ----------
    mesh : TetMesh
    phi_field : ndarray of shape (n_vertices,)
    phi : float
        Iso value.
    interval : float, optional
        Layer interval used to scale the tie-break perturbation; values
        within ``1e-9 * interval`` of ``phi`` are nudged just above it.
        Defaults to ``max(|phi|, 1)``.
    layer_index : int
        Stored on the returned surfaces.

    Returns
    -------
    list of IGDS
        Components ordered by centroid (x, then y, then z). Empty when
        ``phi`` lies outside the field range.
    """
    f = check_field(phi_field, mesh.n_vertices, "phi_field")
    scale = float(interval) if interval is not None else max(abs(float(phi)), 1.0)
    s = _tie_break(f, float(phi), scale)
    ts = s[mesh.tets]
    straddle = np.flatnonzero((ts.max(axis=1) > 0) & (ts.min(axis=1) < 0))
    if straddle.size == 0:
        return []
    out_t, out_e = _triangles_per_tet(mesh, s, straddle)

    # one surface vertex per crossing edge
    all_edges = np.concatenate([e.reshape(-1) for e in out_e])
    cross, inv = np.unique(all_edges, return_inverse=True)
    ev = mesh.edges[cross]
    si, sj = s[ev[:, 0]], s[ev[:, 1]]
    vi, vj = mesh.vertices[ev[:, 0]], mesh.vertices[ev[:, 1]]
    pos = (np.abs(si)[:, None] * vj + np.abs(sj)[:, None] * vi) / np.abs(si - sj)[:, None]

    tri_tet, tris = [], []
    offset = 0
    for rows, e in zip(out_t, out_e):
        k = e.shape[1]
        local = inv[offset:offset + e.size].reshape(-1, k)
        offset += e.size
        if k == 3:
            tri_tet.append(rows)
            tris.append(local)
        else:
            p = pos[local]
            d02 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
            d13 = np.linalg.norm(p[:, 3] - p[:, 1], axis=1)
            use02 = d02 <= d13
            t1 = np.where(use02[:, None], local[:, [0, 1, 2]], local[:, [0, 1, 3]])
            t2 = np.where(use02[:, None], local[:, [0, 2, 3]], local[:, [1, 2, 3]])
            tri_tet += [rows, rows]
            tris += [t1, t2]
    tri_tet = straddle[np.concatenate(tri_tet)]
    tris = np.concatenate(tris)

    # orient every triangle along the field gradient of its tet
    p = mesh.vertices[mesh.tets[tri_tet]]
    D = p[:, :3] - p[:, 3:4]
    du = s[mesh.tets[tri_tet, :3]] - s[mesh.tets[tri_tet, 3:4]]
    grad = np.linalg.solve(D, du[..., None])[..., 0]
    q = pos[tris]
    nrm = np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0])
    flip = np.einsum("ij,ij->i", nrm, grad) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    order = np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0], tri_tet))
    tris, tri_tet = tris[order], tri_tet[order]

    ncomp, labels = _triangle_components(tris, len(pos))
    comps = []
    for c in range(ncomp):
        sel = np.flatnonzero(labels == c)
        used, local = np.unique(tris[sel], return_inverse=True)
        surf = TriMesh(pos[used], local.reshape(-1, 3), validate=False)
        comps.append((surf, tri_tet[sel], ev[used]))
    cents = np.array([c[0].centroid for c in comps])
    order = np.lexsort((cents[:, 2], cents[:, 1], cents[:, 0]))
    return [IGDS(surface=comps[k][0], phi=float(phi), layer_index=layer_index,
                 component_index=j + 1, tet_ids=comps[k][1], source_edges=comps[k][2])
            for j, k in enumerate(order)]


def _triangle_components(tris, n_vertices):
    """Label triangles connected through shared edges."""
    t = len(tris)
    und = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    owner = np.tile(np.arange(t), 3)
    key = und[:, 0] * n_vertices + und[:, 1]
    order = np.argsort(key, kind="stable")
    k = key[order]
    same = np.flatnonzero(k[1:] == k[:-1])
    a, b = owner[order][same], owner[order][same + 1]
    g = sparse.coo_matrix((np.ones(len(a)), (a, b)), shape=(t, t))
    return csgraph.connected_components(g, directed=False)


def base_surface(mesh, source):
    """Layer-0 surface: boundary faces with all three vertices in ``source``.

    Oriented into the solid, i.e. toward increasing distance.
    """
    surf, parent = boundary_surface(mesh)
    in_src = np.zeros(mesh.n_vertices, dtype=bool)
    in_src[np.asarray(source)] = True
    keep = np.all(in_src[parent[surf.triangles]], axis=1)
    if not keep.any():
        return None
    tris = surf.triangles[keep][:, ::-1]
    used, inv = np.unique(tris, return_inverse=True)
    base = TriMesh(surf.vertices[used], inv.reshape(-1, 3), validate=False)
    pv = parent[used]
    return IGDS(surface=base, phi=0.0, layer_index=0, component_index=1,
                tet_ids=np.zeros(0, dtype=np.int64), source_edges=np.column_stack([pv, pv]))


def decompose(mesh, phi_field, interval, source=None):
    """Slice the field at ``d, 2d, ..., floor(phi_max / d) d``.

    Raises
    ------
    ValueError
        If ``interval`` yields no layer at all.
    """
    d = check_positive(interval, "interval")
    f = check_field(phi_field, mesh.n_vertices, "phi_field")
    fmax = float(f.max())
    n = int(np.floor(fmax / d))
    if n < 1:
        raise ValueError(f"interval {d} is not below the maximum distance {fmax:.6g}: no layers")
    layers = []
    for i in range(1, n + 1):
        comps = extract_igds(mesh, f, i * d, interval=d, layer_index=i)
        if not comps:
            if i == n:
                break
            raise ValueError(f"layer {i} is empty although deeper layers exist")
        layers.append(comps)
    if not layers:
        raise ValueError("no layers could be extracted")
    if source is None:
        source = np.flatnonzero(f <= TIE_EPS * d)
    return LayerSet(interval=d, layers=layers, mesh=mesh, phi=f,
                    base=base_surface(mesh, source))
