"""Isotropic remeshing and smoothing of iso-distance surfaces.

Each iteration splits long edges, collapses short ones, flips edges toward
valence 6 (4 on the boundary) and relaxes vertices tangentially; a few
Taubin smoothing passes follow. Interior vertices are pulled back onto the
level set with Newton steps along the field gradient, boundary vertices onto
the original rim polyline, which lies on the solid's boundary surface.
"""

import numpy as np

from ._validation import check_positive
from .exceptions import MeshError
from .geometry import closest_points_on_segments, closest_points_on_triangles
from .layers import IGDS
from .mesh import TriMesh

CORNER_DEG = 30.0
TAUBIN = (0.5, -0.53)


class _Mesh:
    """Mutable triangle soup with edge/vertex incidence for local edits."""

    def __init__(self, V, F):
        self.V = [np.array(v, dtype=float) for v in V]
        self.F = [list(map(int, f)) for f in F]
        self.alive = [True] * len(self.F)
        self.ef = {}
        self.vf = {k: set() for k in range(len(self.V))}
        for f, tri in enumerate(self.F):
            self._link(f, tri)

    @staticmethod
    def _edges(tri):
        a, b, c = tri
        return ((a, b), (b, c), (c, a))

    def _link(self, f, tri):
        for a, b in self._edges(tri):
            self.ef.setdefault((min(a, b), max(a, b)), set()).add(f)
        for v in tri:
            self.vf[v].add(f)

    def _unlink(self, f):
        tri = self.F[f]
        for a, b in self._edges(tri):
            k = (min(a, b), max(a, b))
            s = self.ef[k]
            s.discard(f)
            if not s:
                del self.ef[k]
        for v in tri:
            self.vf[v].discard(f)

    def add_face(self, tri):
        self.F.append(list(tri))
        self.alive.append(True)
        f = len(self.F) - 1
        self._link(f, tri)
        return f

    def remove_face(self, f):
        self._unlink(f)
        self.alive[f] = False

    def add_vertex(self, p):
        self.V.append(np.array(p, dtype=float))
        self.vf[len(self.V) - 1] = set()
        return len(self.V) - 1

    def faces_of_edge(self, a, b):
        return self.ef.get((min(a, b), max(a, b)), set())

    def neighbours(self, v):
        out = set()
        for f in self.vf[v]:
            out.update(self.F[f])
        out.discard(v)
        return out

    def is_boundary_edge(self, a, b):
        return len(self.faces_of_edge(a, b)) == 1

    def boundary_vertices(self):
        out = set()
        for (a, b), fs in self.ef.items():
            if len(fs) == 1:
                out.update((a, b))
        return out

    def n_faces(self):
        return sum(self.alive)

    def normal(self, tri):
        p = [self.V[v] for v in tri]
        return np.cross(p[1] - p[0], p[2] - p[0])

    def compact(self):
        faces = [self.F[f] for f in range(len(self.F)) if self.alive[f]]
        used = sorted({v for t in faces for v in t})
        remap = {v: k for k, v in enumerate(used)}
        V = np.array([self.V[v] for v in used])
        F = np.array([[remap[v] for v in t] for t in faces], dtype=np.int64)
        return V, F, used


def _opposite(tri, a, b):
    return [v for v in tri if v != a and v != b][0]


def _replace(tri, old, new):
    return [new if v == old else v for v in tri]


class _Projector:
    """Pull points back to the level set and the rim."""

    def __init__(self, s, mesh, phi, rim_a, rim_b):
        self.level = s.phi
        self.rim_a, self.rim_b = rim_a, rim_b
        self.tris = s.surface.vertices[s.surface.triangles]
        self.loc = None
        if mesh is not None and phi is not None:
            from .geodesic import tet_gradients
            from .locate import TetLocator

            self.mesh = mesh
            self.phi = np.asarray(phi, dtype=float)
            self.loc = TetLocator(mesh)
            self.grad = tet_gradients(mesh, self.phi)

    def interior(self, P):
        if len(P) == 0:
            return P
        if self.loc is None:
            cp, _ = closest_points_on_triangles(P, self.tris)
            return cp
        P = P.copy()
        for _ in range(4):
            tet, bary = self.loc.locate(P)
            ok = tet >= 0
            if not ok.any():
                break
            val = np.einsum("nk,nk->n", bary[ok], self.phi[self.mesh.tets[tet[ok]]])
            g = self.grad[tet[ok]]
            g2 = np.maximum(np.einsum("ij,ij->i", g, g), 1e-300)
            P[ok] -= ((val - self.level) / g2)[:, None] * g
        # points that left the solid fall back to the original surface
        tet, _ = self.loc.locate(P)
        out = tet < 0
        if out.any():
            P[out], _ = closest_points_on_triangles(P[out], self.tris)
        return P

    def rim(self, P):
        if len(P) == 0 or len(self.rim_a) == 0:
            return P
        cp, _, _ = closest_points_on_segments(P, self.rim_a, self.rim_b)
        return cp


def _corners(s):
    v = s.surface.vertices
    fixed = set()
    for loop in s.boundary_loops:
        loop = np.asarray(loop)
        a = v[loop] - v[np.roll(loop, 1)]
        b = v[np.roll(loop, -1)] - v[loop]
        cosang = np.einsum("ij,ij->i", a, b) / np.maximum(
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1), 1e-300)
        fixed.update(int(x) for x in loop[cosang < np.cos(np.radians(CORNER_DEG))])
    return fixed


def _split_long(m, hi, proj):
    changed = True
    while changed:
        changed = False
        long = [(np.linalg.norm(m.V[a] - m.V[b]), a, b) for (a, b) in list(m.ef)
                if np.linalg.norm(m.V[a] - m.V[b]) > hi]
        for _, a, b in sorted(long, reverse=True):
            fs = list(m.faces_of_edge(a, b))
            if not fs:
                continue
            boundary = len(fs) == 1
            p = 0.5 * (m.V[a] + m.V[b])
            if boundary:
                p = proj.rim(p[None])[0]
            c = m.add_vertex(p)
            for f in fs:
                tri = m.F[f]
                m.remove_face(f)
                m.add_face(_replace(tri, b, c))
                m.add_face(_replace(tri, a, c))
            changed = True


def _collapse_short(m, lo, hi, fixed, min_faces=4):
    bnd = m.boundary_vertices()
    for (a, b) in sorted(m.ef, key=lambda e: np.linalg.norm(m.V[e[0]] - m.V[e[1]])):
        if (min(a, b), max(a, b)) not in m.ef:
            continue
        if np.linalg.norm(m.V[a] - m.V[b]) >= lo or m.n_faces() - 2 < min_faces:
            continue
        for src, dst in ((a, b), (b, a)):
            if _try_collapse(m, src, dst, hi, fixed, bnd):
                break


def _try_collapse(m, src, dst, hi, fixed, bnd):
    if src in fixed:
        return False
    fs = m.faces_of_edge(src, dst)
    edge_bnd = len(fs) == 1
    if src in bnd and not edge_bnd:
        return False
    opp = {_opposite(m.F[f], src, dst) for f in fs}
    if (m.neighbours(src) & m.neighbours(dst)) != opp:
        return False
    pd = m.V[dst]
    for n in m.neighbours(src):
        if np.linalg.norm(m.V[n] - pd) > hi:
            return False
    for f in m.vf[src] - fs:
        tri = m.F[f]
        new = _replace(tri, src, dst)
        n0, n1 = m.normal(tri), m.normal(new)
        if np.dot(n0, n1) <= 0.1 * np.linalg.norm(n0) * np.linalg.norm(n1):
            return False
    for f in list(fs):
        m.remove_face(f)
    for f in list(m.vf[src]):
        tri = m.F[f]
        m.remove_face(f)
        m.add_face(_replace(tri, src, dst))
    return True


def _valence(m, v):
    return len(m.neighbours(v))


def _flip_edges(m):
    bnd = m.boundary_vertices()

    def target(v):
        return 4 if v in bnd else 6

    for (a, b) in list(m.ef):
        fs = list(m.faces_of_edge(a, b))
        if len(fs) != 2:
            continue
        f1, f2 = fs
        t1, t2 = m.F[f1], m.F[f2]
        c, d = _opposite(t1, a, b), _opposite(t2, a, b)
        if (min(c, d), max(c, d)) in m.ef:
            continue
        before = sum(abs(_valence(m, v) - target(v)) for v in (a, b, c, d))
        after = (abs(_valence(m, a) - 1 - target(a)) + abs(_valence(m, b) - 1 - target(b))
                 + abs(_valence(m, c) + 1 - target(c)) + abs(_valence(m, d) + 1 - target(d)))
        if after >= before:
            continue
        # orient along the original winding: t1 runs x->y->c with {x,y} = {a,b}
        i = t1.index(c)
        x, y = t1[(i + 1) % 3], t1[(i + 2) % 3]
        n1, n2 = [x, d, c], [d, y, c]
        ref = m.normal(t1) + m.normal(t2)
        if np.dot(m.normal(n1), ref) <= 0 or np.dot(m.normal(n2), ref) <= 0:
            continue
        m.remove_face(f1)
        m.remove_face(f2)
        m.add_face(n1)
        m.add_face(n2)


def _vertex_normals(m, verts):
    out = {}
    for v in verts:
        n = sum((m.normal(m.F[f]) for f in m.vf[v]), np.zeros(3))
        ln = np.linalg.norm(n)
        out[v] = n / ln if ln > 0 else n
    return out


def _boundary_neighbours(m, v):
    return [n for n in m.neighbours(v) if m.is_boundary_edge(v, n)]


def _relax(m, fixed, proj, weight=1.0):
    live = [v for v in range(len(m.V)) if m.vf[v]]
    bnd = m.boundary_vertices()
    inner = [v for v in live if v not in bnd]
    normals = _vertex_normals(m, inner)
    new = {}
    for v in inner:
        nb = list(m.neighbours(v))
        c = np.mean([m.V[n] for n in nb], axis=0)
        n = normals[v]
        step = c - m.V[v]
        new[v] = m.V[v] + weight * (step - np.dot(step, n) * n)
    rim = []
    for v in bnd:
        if v in fixed or not m.vf[v]:
            continue
        nb = _boundary_neighbours(m, v)
        if len(nb) == 2:
            rim.append(v)
            new[v] = m.V[v] + weight * (0.5 * (m.V[nb[0]] + m.V[nb[1]]) - m.V[v])
    _apply(m, new, inner, rim, proj)


def _apply(m, new, inner, rim, proj):
    inner = [v for v in inner if v in new]
    if inner:
        P = proj.interior(np.array([new[v] for v in inner]))
        for v, p in zip(inner, P):
            m.V[v] = p
    if rim:
        P = proj.rim(np.array([new[v] for v in rim]))
        for v, p in zip(rim, P):
            m.V[v] = p


def _taubin(m, fixed, proj, passes):
    bnd = m.boundary_vertices()
    inner = [v for v in range(len(m.V)) if m.vf[v] and v not in bnd]
    for _ in range(passes):
        for lam in TAUBIN:
            new = {}
            for v in inner:
                c = np.mean([m.V[n] for n in m.neighbours(v)], axis=0)
                new[v] = m.V[v] + lam * (c - m.V[v])
            for v, p in new.items():
                m.V[v] = p
    _apply(m, {v: m.V[v] for v in inner}, inner, [], proj)


def remesh_and_smooth(s, target_edge, iterations=3, mesh=None, phi=None, smoothing_passes=2):
    """Isotropic remeshing of an IGDS toward edge length ``target_edge``.

    With the tet ``mesh`` and its field ``phi`` interior vertices are
    reprojected onto the level set ``phi = s.phi``; without them they are
    projected back onto the input surface. Boundary corners sharper than
    30 degrees are kept fixed. ``iterations=0`` returns ``s`` unchanged.

    Raises
    ------
    MeshError
        If the result would have fewer than 4 triangles.
    """
    L = check_positive(target_edge, "target_edge")
    if int(iterations) != iterations or iterations < 0:
        raise ValueError(f"iterations must be a non-negative integer, got {iterations}")
    if iterations == 0:
        return s
    if s.surface.n_triangles < 4:
        raise MeshError("surface has fewer than 4 triangles")
    v = s.surface.vertices
    a, b = [], []
    for loop in s.boundary_loops:
        loop = np.asarray(loop)
        a.append(v[loop])
        b.append(v[np.roll(loop, -1)])
    rim_a = np.concatenate(a) if a else np.zeros((0, 3))
    rim_b = np.concatenate(b) if b else np.zeros((0, 3))
    proj = _Projector(s, mesh, phi, rim_a, rim_b)
    m = _Mesh(v, s.surface.triangles)
    fixed = _corners(s)
    lo, hi = 0.8 * L, 4.0 / 3.0 * L
    for _ in range(int(iterations)):
        _split_long(m, hi, proj)
        _collapse_short(m, lo, hi, fixed)
        _flip_edges(m)
        _relax(m, fixed, proj)
    if smoothing_passes:
        _taubin(m, fixed, proj, smoothing_passes)
    V, F, _ = m.compact()
    if len(F) < 4:
        raise MeshError(f"remeshing left {len(F)} triangles (< 4)")
    surf = TriMesh(V, F)
    tet_ids = np.full(len(F), -1, dtype=np.int64)
    if proj.loc is not None:
        tet_ids, _ = proj.loc.locate(V[F].mean(axis=1))
    return IGDS(surface=surf, phi=s.phi, layer_index=s.layer_index, component_index=s.component_index,
                tet_ids=tet_ids, source_edges=np.full((len(V), 2), -1, dtype=np.int64))
