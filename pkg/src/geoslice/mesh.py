"""Tetrahedral and triangular mesh containers.

Both containers are immutable once built: coordinate and index arrays are
flagged read-only and all derived adjacency is computed lazily and cached.
"""

from functools import cached_property

import numpy as np
from scipy import sparse

from ._validation import check_cells, check_points, check_positive
from .exceptions import MeshError

# Local numbering inside a tetrahedron (v0, v1, v2, v3).
TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
# TET_EDGES[k] is opposite TET_EDGES[OPPOSITE_EDGE[k]]
OPPOSITE_EDGE = np.array([5, 4, 3, 2, 1, 0])
# Face opposite local vertex i, wound so its normal points out of a
# positively oriented tet.
TET_FACES = np.array([(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)])

ZERO_VOLUME = 1e-12


def signed_volumes(points, tets):
    p = points[tets]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def _readonly(arr):
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


class TetMesh:
    """Tetrahedral solid mesh.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex coordinates in millimetres.
    tets : array_like of int, shape (m, 4)
        Vertex indices of each tetrahedron. Negatively oriented elements
        are repaired by swapping two indices.

    Raises
    ------
    MeshError
        On repeated vertices inside a tet, zero-volume tets or faces
        shared by more than two tets.
    IndexError
        On indices out of range.
    """

    def __init__(self, vertices, tets):
        points = check_points(vertices, "vertices")
        try:
            cells = check_cells(tets, len(points), 4, "tets")
        except IndexError as exc:
            raise MeshError(str(exc)) from None
        if len(cells) == 0:
            raise MeshError("mesh has no tetrahedra")
        srt = np.sort(cells, axis=1)
        rep = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        if rep.size:
            raise MeshError(f"tet {rep[0]} repeats a vertex: {cells[rep[0]].tolist()}")
        vol = signed_volumes(points, cells)
        flat = np.flatnonzero(np.abs(vol) < ZERO_VOLUME)
        if flat.size:
            raise MeshError(
                f"tet {flat[0]} has zero volume ({vol[flat[0]]:.3e} mm^3)")
        neg = vol < 0
        if neg.any():
            cells = cells.copy()
            cells[neg, 2], cells[neg, 3] = cells[neg, 3], cells[neg, 2].copy()
        self.vertices = _readonly(points)
        self.tets = _readonly(cells)
        if np.any(self.face_tets[:, 1] == -2):
            raise MeshError("a triangular face is shared by more than two tets")

    def __repr__(self):
        return f"TetMesh(n_vertices={self.n_vertices}, n_tets={self.n_tets})"

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @cached_property
    def volumes(self):
        return _readonly(signed_volumes(self.vertices, self.tets))

    @property
    def volume(self):
        return float(self.volumes.sum())

    @cached_property
    def centroids(self):
        return _readonly(self.vertices[self.tets].mean(axis=1))

    @cached_property
    def _edge_data(self):
        local = self.tets[:, TET_EDGES]  # (m, 6, 2)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 6)

    @property
    def edges(self):
        """Unique undirected edges, shape (E, 2), sorted lexicographically."""
        return self._edge_data[0]

    @property
    def tet_edges(self):
        """Global edge id of each local edge, shape (m, 6), see TET_EDGES."""
        return self._edge_data[1]

    @cached_property
    def edge_lengths(self):
        e = self.edges
        return _readonly(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1))

    @property
    def mean_edge_length(self):
        return float(self.edge_lengths.mean())

    @cached_property
    def _face_data(self):
        m = self.n_tets
        local = self.tets[:, TET_FACES].reshape(-1, 3)
        keys = np.sort(local, axis=1)
        faces, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        owner = np.repeat(np.arange(m), 4)
        face_tets = np.full((len(faces), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        fid = inverse[order]
        first = np.ones(len(fid), dtype=bool)
        first[1:] = fid[1:] != fid[:-1]
        face_tets[fid[first], 0] = owner[order][first]
        second = ~first
        face_tets[fid[second], 1] = owner[order][second]
        face_tets[counts > 2, 1] = -2
        return faces, inverse.reshape(m, 4), face_tets

    @property
    def faces(self):
        """Unique triangular faces (sorted vertex triples), shape (F, 3)."""
        return self._face_data[0]

    @property
    def tet_faces(self):
        """Global face id of the face opposite each local vertex, shape (m, 4)."""
        return self._face_data[1]

    @property
    def face_tets(self):
        """Tets on either side of each face; -1 marks the outside."""
        return self._face_data[2]

    @cached_property
    def tet_neighbors(self):
        """Tet across the face opposite each local vertex (-1 on the boundary)."""
        ft = self.face_tets[self.tet_faces]  # (m, 4, 2)
        me = np.arange(self.n_tets)[:, None]
        nb = np.where(ft[..., 0] == me, ft[..., 1], ft[..., 0])
        return _readonly(nb)

    @cached_property
    def vertex_tets(self):
        """Sparse incidence (n_vertices x n_tets) in CSR form."""
        m = self.n_tets
        rows = self.tets.reshape(-1)
        cols = np.repeat(np.arange(m), 4)
        inc = sparse.csr_matrix(
            (np.ones(4 * m, dtype=np.int8), (rows, cols)), shape=(self.n_vertices, m))
        inc.sort_indices()
        return inc

    def edge_tets(self, edge_id):
        """Tets incident to a global edge."""
        return np.flatnonzero(np.any(self.tet_edges == edge_id, axis=1))

    @cached_property
    def boundary_face_mask(self):
        return _readonly(self.face_tets[:, 1] == -1)

    @cached_property
    def boundary_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.faces[self.boundary_face_mask].reshape(-1)] = True
        return _readonly(mask)

    def with_vertices(self, vertices):
        """Same connectivity, new coordinates (e.g. after a rigid motion)."""
        return TetMesh(vertices, self.tets)


class TriMesh:
    """Triangle surface mesh with per-vertex unit normals.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
    triangles : array_like of int, shape (f, 3)
    normals : array_like, shape (n, 3), optional
        Unit vertex normals. Area-weighted face normals are used when omitted.
    validate : bool, default=True
        Check edge-manifoldness and consistent orientation.
    """

    def __init__(self, vertices, triangles, normals=None, validate=True):
        self.vertices = _readonly(check_points(vertices, "vertices"))
        tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        try:
            tris = check_cells(tris, len(self.vertices), 3, "triangles")
        except IndexError as exc:
            raise MeshError(str(exc)) from None
        self.triangles = _readonly(tris)
        if normals is not None:
            normals = np.asarray(normals, dtype=np.float64)
            if normals.shape != self.vertices.shape:
                raise ValueError("normals must match vertices in shape")
            self._normals = _readonly(normals)
        else:
            self._normals = None
        if validate:
            self.check_manifold()

    def __repr__(self):
        return f"TriMesh(n_vertices={len(self.vertices)}, n_triangles={len(self.triangles)})"

    def check_manifold(self):
        d = self.directed_edges
        if len(d) == 0:
            return
        und = np.sort(d, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("surface is not edge-manifold (edge with > 2 triangles)")
        _, dcounts = np.unique(d, axis=0, return_counts=True)
        if np.any(dcounts > 1):
            raise MeshError("surface orientation is inconsistent across a shared edge")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def directed_edges(self):
        t = self.triangles
        return np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])

    @cached_property
    def area_vectors(self):
        """Per-triangle normal scaled by twice the area."""
        p = self.vertices[self.triangles]
        return _readonly(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))

    @cached_property
    def areas(self):
        return _readonly(0.5 * np.linalg.norm(self.area_vectors, axis=1))

    @property
    def area(self):
        return float(self.areas.sum())

    @cached_property
    def face_normals(self):
        n = self.area_vectors
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        return _readonly(n / np.where(ln > 0, ln, 1.0))

    @property
    def normals(self):
        if self._normals is None:
            acc = np.zeros_like(self.vertices)
            for k in range(3):
                np.add.at(acc, self.triangles[:, k], self.area_vectors)
            ln = np.linalg.norm(acc, axis=1, keepdims=True)
            self._normals = _readonly(acc / np.where(ln > 0, ln, 1.0))
        return self._normals

    @cached_property
    def centroid(self):
        c = self.vertices[self.triangles].mean(axis=1)
        w = self.areas
        if w.sum() <= 0:
            return self.vertices.mean(axis=0)
        return (c * w[:, None]).sum(axis=0) / w.sum()

    @cached_property
    def edges(self):
        """Unique undirected edges and the count of triangles on each."""
        und = np.sort(self.directed_edges, axis=1)
        return np.unique(und, axis=0, return_counts=True)

    @cached_property
    def boundary_edges(self):
        """Directed boundary edges following the triangle winding."""
        d = self.directed_edges
        if len(d) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        und = np.sort(d, axis=1)
        _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        return d[counts[inv.reshape(-1)] == 1]

    @cached_property
    def boundary_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.reshape(-1)] = True
        return mask

    @cached_property
    def boundary_loops(self):
        """Closed boundary loops as vertex index arrays, in winding order.

        Loops are ordered by their smallest vertex index so the output is
        deterministic.
        """
        be = self.boundary_edges
        nxt = {}
        for a, b in be.tolist():
            nxt.setdefault(a, []).append(b)
        loops = []
        used = set()
        for start in sorted(nxt):
            for first in nxt[start]:
                if (start, first) in used:
                    continue
                loop = [start]
                used.add((start, first))
                cur = first
                while cur != start:
                    loop.append(cur)
                    cands = [c for c in nxt.get(cur, []) if (cur, c) not in used]
                    if not cands:
                        raise MeshError("open boundary chain (non-manifold vertex)")
                    used.add((cur, cands[0]))
                    cur = cands[0]
                loops.append(np.array(loop, dtype=np.int64))
        return loops

    @property
    def is_closed(self):
        return len(self.boundary_edges) == 0

    def vertex_adjacency(self):
        e, _ = self.edges
        n = self.n_vertices
        adj = sparse.coo_matrix(
            (np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
            shape=(n, n)).tocsr()
        return adj

    def flipped(self):
        return TriMesh(self.vertices, self.triangles[:, ::-1],
                       normals=-self.normals, validate=False)

    def signed_volume(self):
        p = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


def vertex_volumes(mesh):
    """One quarter of the total volume of the tets around each vertex (mm^3)."""
    vv = np.zeros(mesh.n_vertices)
    np.add.at(vv, mesh.tets.reshape(-1), np.repeat(mesh.volumes / 4.0, 4))
    return vv


def boundary_surface(mesh):
    """Outward-oriented boundary of a tet mesh.

    Returns
    -------
    surface : TriMesh
        Compact surface mesh over the boundary vertices only.
    parent : ndarray of int
        For each surface vertex, its index in ``mesh``.
    """
    tf = mesh.tet_faces
    ft = mesh.face_tets
    bfaces = np.flatnonzero(mesh.boundary_face_mask)
    owner = ft[bfaces, 0]
    local = np.argmax(tf[owner] == bfaces[:, None], axis=1)
    tris = mesh.tets[owner[:, None], TET_FACES[local]]
    parent, inv = np.unique(tris.reshape(-1), return_inverse=True)
    return TriMesh(mesh.vertices[parent], inv.reshape(-1, 3)), parent


def select_base_vertices(mesh, spec="bottom", tolerance=None):
    """Pick the heat-source vertex set.

    Parameters
    ----------
    mesh : TetMesh
    spec : {"bottom"} or sequence of int
        ``"bottom"`` selects every vertex with ``z <= z_min + tolerance``;
        a sequence is validated and returned as an explicit index set.
    tolerance : float, optional
        Bottom-face tolerance in mm; defaults to 1e-4 of the bounding-box
        height.

    Returns
    -------
    ndarray of int
        Sorted unique vertex indices.
    """
    if isinstance(spec, str):
        if spec != "bottom":
            raise ValueError(f"unknown base spec {spec!r}")
        z = mesh.vertices[:, 2]
        if tolerance is None:
            tolerance = 1e-4 * max(float(z.max() - z.min()), np.finfo(float).tiny)
        tolerance = check_positive(tolerance, "tolerance")
        idx = np.flatnonzero(z <= z.min() + tolerance)
    else:
        idx = np.unique(np.asarray(spec, dtype=np.int64).reshape(-1))
        if idx.size and (idx.min() < 0 or idx.max() >= mesh.n_vertices):
            raise MeshError(
                f"base vertex index out of range (mesh has {mesh.n_vertices} vertices)")
    if idx.size == 0:
        raise MeshError("base vertex set is empty")
    return idx
