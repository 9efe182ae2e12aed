"""Iso-contour filling paths with tool axes and mass-conserving feed rates."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ._validation import check_positive
from .exceptions import MeshError
from .geometry import closest_points_on_triangles
from .metrics import layer_thickness, previous_layers

logger = logging.getLogger(__name__)

PATH_HEADER = "# geoslice-path v1"


@dataclass(frozen=True)
class PrintParams:
    """Deposition parameters (mm, mm/s).

    ``layer_height`` is only used where no previous layer is available to
    measure the local thickness from.
    """

    filament_radius: float = 0.875
    stepover: float = 0.8
    mu: float = 1.0
    feed: float = 20.0
    travel_clearance: float = 5.0
    layer_height: float = 0.6

    def __post_init__(self):
        check_positive(self.filament_radius, "filament_radius")
        check_positive(self.stepover, "stepover")
        check_positive(self.mu, "mu", upper=1.0)
        check_positive(self.feed, "feed", strict=False)
        check_positive(self.travel_clearance, "travel_clearance")
        check_positive(self.layer_height, "layer_height")


def feed_rate(params, h):
    """Filament feed ``f_m = mu l h f_p / (pi r_m^2)``; ``h`` may be an array."""
    h = np.asarray(h, dtype=float)
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise ValueError("layer thickness h must be > 0")
    f = params.mu * params.stepover * h * params.feed / (np.pi * params.filament_radius ** 2)
    return float(f) if f.ndim == 0 else f


# -- heat method on a triangle mesh ------------------------------------------

@dataclass(frozen=True)
class SurfaceField:
    surface: object
    values: np.ndarray
    seeds: np.ndarray


def _hat_gradients(surface):
    p = surface.vertices[surface.triangles]
    n2 = surface.area_vectors
    area = 0.5 * np.linalg.norm(n2, axis=1)
    if np.any(area <= 0):
        raise MeshError("surface has degenerate triangles")
    nrm = n2 / (2 * area[:, None])
    # gradient of the hat function of corner k: (n x e_k) / (2A), e_k opposite k
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    g = np.cross(nrm[:, None, :], e) / (2 * area[:, None, None])
    return g, area


def _operators(surface):
    g, area = _hat_gradients(surface)
    t = surface.triangles
    n = surface.n_vertices
    kij = np.einsum("fik,fjk->fij", g, g) * area[:, None, None]
    rows = np.repeat(t, 3, axis=1).reshape(-1)
    cols = np.tile(t, (1, 3)).reshape(-1)
    K = sparse.csr_matrix((kij.reshape(-1), (rows, cols)), shape=(n, n))
    m = np.zeros(n)
    np.add.at(m, t.reshape(-1), np.repeat(area / 3.0, 3))
    return K, sparse.diags(m), g, area


def _dirichlet_solve(A, rhs, fixed, values):
    n = A.shape[0]
    free = np.ones(n, dtype=bool)
    free[fixed] = False
    x = np.zeros(n)
    x[fixed] = values
    if free.any():
        A = A.tocsr()
        b = rhs[free] - A[free][:, fixed] @ x[fixed]
        x[free] = splu(A[free][:, free].tocsc()).solve(b)
    return x


def surface_geodesic(surface, seeds, time_scale=1.0):
    """Heat-method distance on a triangle mesh from the vertices ``seeds``.

    Temperature 1 is held on the seeds for one implicit step of length
    ``time_scale * h^2``; the normalised descent direction is then
    integrated with a Poisson solve pinned to 0 on the seeds.
    """
    seeds = np.unique(np.asarray(seeds, dtype=np.int64))
    if seeds.size == 0:
        raise ValueError("at least one seed vertex is required")
    K, M, g, area = _operators(surface)
    e, _ = surface.edges
    h = np.linalg.norm(surface.vertices[e[:, 0]] - surface.vertices[e[:, 1]], axis=1).mean()
    t = time_scale * h * h
    u = _dirichlet_solve(M + t * K, np.zeros(surface.n_vertices), seeds, 1.0)
    grad = np.einsum("fk,fkd->fd", u[surface.triangles], g)
    ln = np.linalg.norm(grad, axis=1, keepdims=True)
    X = np.where(ln > 0, -grad / np.where(ln > 0, ln, 1.0), 0.0)
    # weak divergence: b_i = sum_f A_f X_f . grad(hat_i)
    b = np.zeros(surface.n_vertices)
    np.add.at(b, surface.triangles.reshape(-1), (np.einsum("fd,fkd->fk", X, g) * area[:, None]).reshape(-1))
    phi = _dirichlet_solve(K, b, seeds, 0.0)
    return SurfaceField(surface, phi, seeds)


def surface_geodesic_from_boundary(s, time_scale=1.0):
    """Distance to the boundary of an open surface (an IGDS or a TriMesh).

    Raises
    ------
    MeshError
        If the surface is closed.
    """
    surf = getattr(s, "surface", s)
    if surf.is_closed:
        raise MeshError("surface has no boundary; seed the field from a point instead")
    return surface_geodesic(surf, np.flatnonzero(surf.boundary_vertex_mask), time_scale)


# -- marching triangles ------------------------------------------------------

@dataclass(frozen=True)
class Contour:
    """Iso-line polyline; point k lies on mesh edge ``edges[k]`` at ``t[k]``."""

    points: np.ndarray
    edges: np.ndarray
    t: np.ndarray
    closed: bool
    level: float
    level_index: int

    @property
    def length(self):
        p = self.points
        seg = np.linalg.norm(np.diff(p, axis=0), axis=1).sum()
        if self.closed and len(p) > 1:
            seg += np.linalg.norm(p[0] - p[-1])
        return float(seg)


@dataclass(frozen=True)
class ContourSet:
    contours: list
    stepover: float
    dot: np.ndarray = None
    dot_vertex: int = None

    def __len__(self):
        return len(self.contours)

    def __iter__(self):
        return iter(self.contours)


def _iso_lines(surface, f, level, eps):
    s = f - level
    s = np.where(np.abs(s) < eps, eps, s)
    tri = surface.triangles
    pos = s[tri] > 0
    cnt = pos.sum(axis=1)
    cross = np.flatnonzero((cnt == 1) | (cnt == 2))
    if cross.size == 0:
        return []
    ea = np.stack([tri[cross, k] for k in range(3)], axis=1)
    eb = np.stack([tri[cross, (k + 1) % 3] for k in range(3)], axis=1)
    # each crossing triangle has exactly two crossing edges
    mask = (s[ea] > 0) != (s[eb] > 0)
    pairs = np.sort(np.stack([ea, eb], axis=2), axis=2)[mask].reshape(-1, 2, 2)
    ids, inv = np.unique(pairs.reshape(-1, 2), axis=0, return_inverse=True)
    inv = inv.reshape(-1, 2)
    adj = {}
    for a, b in inv.tolist():
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    va, vb = ids[:, 0], ids[:, 1]
    t = s[va] / (s[va] - s[vb])
    pts = (1 - t)[:, None] * surface.vertices[va] + t[:, None] * surface.vertices[vb]
    seen = np.zeros(len(ids), dtype=bool)
    chains = []
    # open chains first (they start at degree-1 nodes), then loops
    starts = [k for k in range(len(ids)) if len(adj[k]) == 1] + list(range(len(ids)))
    for st in starts:
        if seen[st]:
            continue
        chain = [st]
        seen[st] = True
        prev, cur = None, st
        while True:
            nxt = [x for x in adj[cur] if x != prev and not seen[x]]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            seen[cur] = True
            chain.append(cur)
        closed = len(chain) > 2 and chain[0] in adj[chain[-1]]
        c = np.asarray(chain)
        chains.append((pts[c], ids[c], t[c], closed))
    return chains


def extract_contours(field, stepover):
    """Iso-lines of a boundary-distance field at ``l/2, 3l/2, ...``.

    Returns contours ordered by level (outermost first), then by centroid.
    When the field never reaches ``l/2`` the set holds no contour and a dot
    at the surface point nearest the area centroid.
    """
    l = check_positive(stepover, "stepover")
    surf, f = field.surface, np.asarray(field.values, dtype=float)
    fmax = float(f.max())
    out = []
    k = 0
    while (k + 0.5) * l < fmax:
        level = (k + 0.5) * l
        lines = _iso_lines(surf, f, level, 1e-9 * l)
        lines.sort(key=lambda c: tuple(c[0].mean(axis=0)))
        out += [Contour(p, e, t, closed, level, k) for p, e, t, closed in lines]
        k += 1
    if out:
        return ContourSet(out, l)
    tris = surf.vertices[surf.triangles]
    cp, _ = closest_points_on_triangles(surf.centroid[None], tris)
    vert = int(np.argmin(np.linalg.norm(surf.vertices - cp[0], axis=1)))
    return ContourSet([], l, dot=cp[0], dot_vertex=vert)


# -- linking -----------------------------------------------------------------

@dataclass
class Toolpath:
    """Ordered waypoints; ``kind[k]`` describes the move that reaches point k.

    ``layer_change[k]`` marks the unlifted move onto the next layer of the
    same branch, which is not counted as a travel move.
    """

    positions: np.ndarray
    axes: np.ndarray
    kind: np.ndarray
    f_p: np.ndarray
    f_m: np.ndarray
    h: np.ndarray
    layer_change: np.ndarray = None
    keys: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.positions)
        if self.layer_change is None:
            self.layer_change = np.zeros(n, dtype=bool)

    def __len__(self):
        return len(self.positions)

    @classmethod
    def empty(cls):
        z3 = np.zeros((0, 3))
        z = np.zeros(0)
        return cls(z3, z3.copy(), np.zeros(0, dtype="<U1"), z, z.copy(), z.copy())

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        keys = []
        for p in parts:
            keys += p.keys
        return cls(*(np.concatenate([getattr(p, a) for p in parts])
                     for a in ("positions", "axes", "kind", "f_p", "f_m", "h", "layer_change")),
                   keys=keys)

    @property
    def travel_move_count(self):
        """Runs of travel waypoints, excluding the initial approach and layer changes."""
        t = (self.kind == "T") & ~self.layer_change
        if len(t) == 0:
            return 0
        starts = t & ~np.r_[False, t[:-1]]
        starts[0] = False
        return int(starts.sum())

    def _lengths(self, kind):
        seg = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return seg[self.kind[1:] == kind]

    @property
    def print_length(self):
        return float(self._lengths("P").sum())

    @property
    def travel_length(self):
        return float(self._lengths("T").sum())

    def deposited_volume(self, params):
        """Sum over print moves of length * l * h * mu (h at the move's end)."""
        seg = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        p = self.kind[1:] == "P"
        return float((seg[p] * self.h[1:][p]).sum() * params.stepover * params.mu)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    def to_text(self):
        lines = [PATH_HEADER]
        for k in range(len(self)):
            x, y, z = self.positions[k]
            a, b, c = self.axes[k]
            lines.append(f"{self.kind[k]} {x:.6f} {y:.6f} {z:.6f} {a:.6f} {b:.6f} {c:.6f} "
                         f"{self.f_p[k]:.6f} {self.f_m[k]:.6f} {self.h[k]:.6f}")
        return "\n".join(lines) + "\n"


def read_toolpath(path):
    """Parse a path file written by :meth:`Toolpath.write`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != PATH_HEADER:
        raise ValueError(f"{path}: missing header {PATH_HEADER!r}")
    kinds, rows = [], []
    for no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 10 or parts[0] not in ("P", "T"):
            raise ValueError(f"{path}:{no}: malformed waypoint line")
        kinds.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    a = np.asarray(rows, dtype=float).reshape(-1, 9)
    return Toolpath(a[:, :3], a[:, 3:6], np.asarray(kinds, dtype="<U1"), a[:, 6], a[:, 7], a[:, 8])


class _Builder:
    def __init__(self, params, axis_of, h_of):
        self.params = params
        self.axis_of = axis_of
        self.h_of = h_of
        self.pos, self.ax, self.kind, self.h = [], [], [], []

    def add(self, points, edges, t, kind):
        ax = self.axis_of(edges, t)
        h = self.h_of(edges, t)
        self.pos.append(points)
        self.ax.append(ax)
        self.h.append(h)
        self.kind.append(np.asarray(kind, dtype="<U1"))

    @property
    def last(self):
        return self.pos[-1][-1] if self.pos else None

    def build(self, key):
        pos = np.concatenate(self.pos)
        kind = np.concatenate(self.kind)
        h = np.concatenate(self.h)
        fp = np.full(len(pos), float(self.params.feed))
        fm = np.zeros(len(pos))
        p = kind == "P"
        if p.any():
            fm[p] = feed_rate(self.params, h[p])
        h = np.where(p, h, 0.0)
        return Toolpath(pos, np.concatenate(self.ax), kind, fp, fm, h, keys=[key])


def _order_contours(contours, start):
    """Depth-first over the nesting forest: each contour's parent is the
    nearest contour one level further out; children are taken nearest first."""
    by_level = {}
    for q, c in enumerate(contours):
        by_level.setdefault(c.level_index, []).append(q)
    parent = {}
    for q, c in enumerate(contours):
        outer = by_level.get(c.level_index - 1, [])
        if outer:
            d = [np.linalg.norm(contours[o].points - c.points[0], axis=1).min() for o in outer]
            parent[q] = outer[int(np.argmin(d))]
    children = {q: [] for q in range(len(contours))}
    roots = []
    for q in range(len(contours)):
        (children[parent[q]] if q in parent else roots).append(q)
    order, cur = [], start
    pending = [roots]
    while pending:
        group = pending[-1]
        if not group:
            pending.pop()
            continue
        if cur is None:
            q = group[0]
        else:
            q = min(group, key=lambda o: (np.linalg.norm(contours[o].points - cur, axis=1).min(), o))
        group.remove(q)
        order.append(q)
        c = contours[q]
        cur = c.points[0] if c.closed else c.points[-1]
        pending.append(list(children[q]))
    return order


def connect_contours(contours, s, params, layers=None, tree=None, start=None, thickness=None):
    """Join contours outermost to innermost into one waypoint list.

    Closed contours are entered at the point nearest the current position
    and traversed once around; a link of at most ``2 l`` to the next
    contour is printed, longer ones are travel moves. Tool axes are the
    interpolated vertex normals; ``h`` comes from ``thickness`` (per vertex)
    or from the thickness to the previous layers, clamped to
    ``[0.25 d, 2 d]``.
    """
    surf = s.surface
    nrm = surf.normals
    h_v = _vertex_thickness(s, params, layers, tree) if thickness is None else np.asarray(thickness)

    def axis_of(edges, t):
        a = (1 - t)[:, None] * nrm[edges[:, 0]] + t[:, None] * nrm[edges[:, 1]]
        return a / np.linalg.norm(a, axis=1, keepdims=True)

    def h_of(edges, t):
        return (1 - t) * h_v[edges[:, 0]] + t * h_v[edges[:, 1]]

    b = _Builder(params, axis_of, h_of)
    if len(contours) == 0:
        v = contours.dot_vertex
        b.add(contours.dot[None], np.array([[v, v]]), np.zeros(1), ["P"])
        return b.build(s.key)
    cs = contours.contours
    for q in _order_contours(cs, None if start is None else np.asarray(start, dtype=float)):
        c = cs[q]
        cur = b.last if b.last is not None else (None if start is None else np.asarray(start))
        if c.closed:
            k0 = 0 if cur is None else int(np.argmin(np.linalg.norm(c.points - cur, axis=1)))
            idx = np.r_[np.arange(k0, len(c.points)), np.arange(0, k0 + 1)]
        else:
            flip = cur is not None and (np.linalg.norm(c.points[-1] - cur) < np.linalg.norm(c.points[0] - cur))
            idx = np.arange(len(c.points))[::-1] if flip else np.arange(len(c.points))
        if b.last is None:
            entry = "T"
        else:
            entry = "P" if np.linalg.norm(c.points[idx[0]] - b.last) <= 2 * params.stepover else "T"
        kinds = ["P"] * len(idx)
        kinds[0] = entry
        b.add(c.points[idx], c.edges[idx], c.t[idx], kinds)
    return b.build(s.key)


def _vertex_thickness(s, params, layers, tree):
    n = s.surface.n_vertices
    if layers is None:
        return np.full(n, params.layer_height)
    d = layers.interval
    prev = [p for p in previous_layers(layers, s, tree) if p is not None]
    if not prev:
        return np.full(n, d)
    rep = layer_thickness(s, prev, d, interior_only=False)
    return np.clip(rep.thickness, 0.25 * d, 2.0 * d)


def plan_layer(s, params, layers=None, tree=None, start=None, time_scale=1.0):
    """Field, contours and linked path for one IGDS."""
    surf = s.surface
    if surf.is_closed:
        # no rim to offset from: grow the field from the vertex nearest the start
        ref = surf.vertices[0] if start is None else np.asarray(start, dtype=float)
        seed = int(np.argmin(np.linalg.norm(surf.vertices - ref, axis=1)))
        fld = surface_geodesic(surf, [seed], time_scale)
    else:
        fld = surface_geodesic_from_boundary(surf, time_scale)
    cs = extract_contours(fld, params.stepover)
    return connect_contours(cs, s, params, layers, tree, start)


def plan_all(layers, seq, params, tree=None, time_scale=1.0):
    """Whole-part path: per-IGDS paths in sequence order.

    At a retraction (consecutive surfaces not joined in the tree) the head
    lifts by the travel clearance along the current axis, moves over the
    next start and descends onto it; otherwise it moves straight onto the
    next layer.
    """
    if tree is None:
        from .skeleton import build_skeleton_tree

        tree = build_skeleton_tree(layers, check_floating=False)
    parts, prev_key, cur, cur_axis = [], None, None, None
    for key in seq:
        s = layers.get(tuple(key))
        path = plan_layer(s, params, layers, tree, start=cur, time_scale=time_scale)
        if prev_key is not None:
            if tree.has_edge(prev_key, key):
                path.layer_change[0] = path.kind[0] == "T"
            else:
                path = _with_lift(path, cur, cur_axis, params)
        parts.append(path)
        prev_key, cur, cur_axis = tuple(key), path.positions[-1], path.axes[-1]
    return Toolpath.concat(parts)


def _with_lift(path, cur, cur_axis, params):
    c = params.travel_clearance
    tgt, tgt_axis = path.positions[0], path.axes[0]
    pos = np.vstack([cur + c * cur_axis, tgt + c * tgt_axis, tgt])
    ax = np.vstack([cur_axis, tgt_axis, tgt_axis])
    lift = Toolpath(pos, ax, np.array(["T", "T", "T"]), np.full(3, float(params.feed)), np.zeros(3),
                    np.zeros(3))
    rest = path
    if len(path) > 1 and path.kind[0] == "T":
        # the descent replaces the layer's own approach waypoint
        rest = Toolpath(*(getattr(path, a)[1:] for a in ("positions", "axes", "kind", "f_p", "f_m",
                                                          "h", "layer_change")), keys=path.keys)
    out = Toolpath.concat([lift, rest])
    out.keys = list(path.keys)
    return out
