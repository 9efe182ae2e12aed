"""Nozzle-cone envelopes and potential-collision tables."""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive
from .geometry import any_triangle_intersection, points_inside
from .mesh import TriMesh

logger = logging.getLogger(__name__)

DEFAULT_HEIGHT = 50.0
DEFAULT_SAMPLES = 64
AREA_RTOL = 0.01
MAX_DOUBLINGS = 4


@dataclass(frozen=True)
class NozzleCone:
    """Bounding cone of the print head: half-angle (degrees) and height (mm)."""

    half_angle: float
    height: float = DEFAULT_HEIGHT

    def __post_init__(self):
        a = float(self.half_angle)
        if not np.isfinite(a) or not 0.0 < a < 90.0:
            raise ValueError(f"half_angle must lie in (0, 90) degrees, got {self.half_angle}")
        check_positive(self.height, "height")

    @property
    def radians(self):
        return np.radians(self.half_angle)


@dataclass(frozen=True)
class EnvelopeMesh:
    surface: TriMesh
    key: tuple
    n_samples: int

    @property
    def triangles(self):
        return self.surface.vertices[self.surface.triangles]

    @property
    def bounds(self):
        v = self.surface.vertices
        return v.min(axis=0), v.max(axis=0)


def _loop_length(v, loop):
    return float(np.linalg.norm(v[np.roll(loop, -1)] - v[loop], axis=1).sum())


def _refine_loop(surface, loop, target):
    """Split the edges of ``loop`` until it has at least ``target`` vertices.

    New points are inserted on boundary edges and the owning triangle is
    re-fanned from its opposite vertex, so the result stays conforming.
    Returns (vertices, triangles, normals, refined loop).
    """
    v = surface.vertices
    nrm = surface.normals
    loop = np.asarray(loop)
    seg = np.linalg.norm(v[np.roll(loop, -1)] - v[loop], axis=1)
    n = len(loop)
    splits = np.zeros(n, dtype=int)
    if target > n:
        # distribute the extra points over edges in proportion to length
        extra = target - n
        want = seg / seg.sum() * extra
        splits = np.floor(want).astype(int)
        rest = extra - splits.sum()
        if rest > 0:
            splits[np.argsort(-(want - splits), kind="stable")[:rest]] += 1
    tri = surface.triangles
    edge_face = {}
    for f, t in enumerate(tri):
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edge_face[(int(a), int(b))] = f
    new_v, new_n = [v], [nrm]
    nv = len(v)
    out_loop = []
    replace = {}
    for k in range(n):
        a, b = int(loop[k]), int(loop[(k + 1) % n])
        out_loop.append(a)
        s = splits[k]
        if s == 0:
            continue
        t = np.arange(1, s + 1) / (s + 1)
        new_v.append(v[a] + t[:, None] * (v[b] - v[a]))
        nn = (1 - t)[:, None] * nrm[a] + t[:, None] * nrm[b]
        new_n.append(nn / np.linalg.norm(nn, axis=1, keepdims=True))
        ids = list(range(nv, nv + s))
        nv += s
        out_loop.extend(ids)
        replace.setdefault(edge_face[(a, b)], {})[(a, b)] = ids
    tris = []
    for f, t in enumerate(tri):
        t = [int(x) for x in t]
        split = replace.get(f)
        if not split:
            tris.append(t)
            continue
        ring = []
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            ring += [a] + split.get((a, b), [])
        if len(split) == 1:
            # one split edge: fan from the opposite corner
            (a, b), = split
            c = [x for x in t if x not in (a, b)][0]
            k = ring.index(c)
            ring = ring[k:] + ring[:k]
            tris += [[c, p, q] for p, q in zip(ring[1:-1], ring[2:])]
        else:
            # several split edges (a corner triangle): fan from its centroid
            new_v.append(v[t].mean(axis=0, keepdims=True))
            nn = nrm[t].sum(axis=0)
            new_n.append((nn / np.linalg.norm(nn))[None])
            c = nv
            nv += 1
            tris += [[c, p, q] for p, q in zip(ring, ring[1:] + ring[:1])]
    return (np.concatenate(new_v), np.asarray(tris, dtype=np.int64), np.concatenate(new_n),
            np.asarray(out_loop, dtype=np.int64))


AXIS_MODES = ("mean", "vertex")


def layer_axis(surface):
    """Area-weighted mean normal of a surface (unit length)."""
    a = surface.area_vectors.sum(axis=0)
    ln = np.linalg.norm(a)
    if ln == 0:
        raise ValueError("surface has no preferred normal direction")
    return a / ln


def _strip_envelope(s, cone, n_samples, axis="mean"):
    surf = s.surface
    loops = [np.asarray(lp) for lp in surf.boundary_loops]
    lengths = [_loop_length(surf.vertices, lp) for lp in loops]
    main = int(np.argmax(lengths))
    V, T, N, loop = _refine_loop(surf, loops[main], n_samples)
    if len(loop) < 3:
        raise ValueError(f"surface {s.key}: boundary has fewer than 3 samples")
    P = V[loop]
    n = N[loop] if axis == "vertex" else np.broadcast_to(layer_axis(surf), P.shape)
    tau = np.roll(P, -1, axis=0) - np.roll(P, 1, axis=0)
    tau -= np.einsum("ij,ij->i", tau, n)[:, None] * n
    tau /= np.maximum(np.linalg.norm(tau, axis=1, keepdims=True), 1e-300)
    outward = np.cross(tau, n)
    al = cone.radians
    gen = np.cos(al) * n + np.sin(al) * outward
    Q = P + (cone.height / np.cos(al)) * gen
    m = len(loop)
    base = len(V)
    q_ids = base + np.arange(m)
    c_id = base + m
    verts = np.concatenate([V, Q, Q.mean(axis=0, keepdims=True)])
    k = np.arange(m)
    k1 = (k + 1) % m
    p_ids = loop
    strip = np.concatenate([
        np.column_stack([p_ids[k], p_ids[k1], q_ids[k1]]),
        np.column_stack([p_ids[k], q_ids[k1], q_ids[k]])])
    cap = np.column_stack([np.full(m, c_id), q_ids[k], q_ids[k1]])
    parts = [T[:, ::-1], strip, cap]
    # holes of the layer close the bottom with flat fans
    for h, lp in enumerate(loops):
        if h == main:
            continue
        c = len(verts)
        verts = np.concatenate([verts, surf.vertices[lp].mean(axis=0, keepdims=True)])
        parts.append(np.column_stack([np.full(len(lp), c), lp, np.roll(lp, -1)]))
    tris = np.concatenate(parts)
    env = TriMesh(verts, tris, validate=False)
    if env.signed_volume() < 0:
        env = TriMesh(verts, tris[:, ::-1], validate=False)
    return env, m


def _offset_envelope(s, cone):
    surf = s.surface
    V = surf.vertices
    top = V + cone.height * surf.normals
    n = len(V)
    verts = np.concatenate([V, top])
    tris = np.concatenate([surf.triangles[:, ::-1], surf.triangles + n])
    env = TriMesh(verts, tris, validate=False)
    if env.signed_volume() < 0:
        env = TriMesh(verts, tris[:, ::-1], validate=False)
    return env


def sweep_envelope(s, cone, boundary_samples=DEFAULT_SAMPLES, adaptive=True, axis="mean"):
    """Closed surface bounding the nozzle cone swept over ``s``.

    The side is a ruled strip along the longest boundary loop: each sample
    P carries a generator obtained by tilting the layer normal outward by
    the half-angle, of length ``height / cos(half_angle)``. The layer itself
    closes the bottom (other loops are filled with fans) and a centroid fan
    closes the top. With ``adaptive`` the sample count is doubled until the
    envelope area changes by less than 1%. Closed layers get the layer
    offset by ``height`` along its normals instead.

    ``axis="mean"`` tilts every generator from the layer's mean normal, which
    keeps envelopes nested in the half-angle; ``axis="vertex"`` uses the
    local vertex normal and can fold on strongly curved layers.
    """
    if axis not in AXIS_MODES:
        raise ValueError(f"axis must be one of {AXIS_MODES}, got {axis!r}")
    if not isinstance(cone, NozzleCone):
        cone = NozzleCone(*cone)
    if int(boundary_samples) < 16:
        raise ValueError(f"boundary_samples must be at least 16, got {boundary_samples}")
    if s.surface.is_closed:
        return EnvelopeMesh(_offset_envelope(s, cone), s.key, 0)
    n = int(boundary_samples)
    env, used = _strip_envelope(s, cone, n, axis)
    if adaptive:
        for _ in range(MAX_DOUBLINGS):
            n *= 2
            env2, used2 = _strip_envelope(s, cone, n, axis)
            change = abs(env2.area - env.area) / env.area
            env, used = env2, used2
            if change < AREA_RTOL:
                break
    return EnvelopeMesh(env, s.key, used)


def envelopes_intersect(env, other):
    """Whether the layer ``other`` touches the volume bounded by ``env``.

    A full implementation of "some triangle crosses the envelope or some
    vertex is inside": since a layer is connected, once no triangle crosses
    the envelope a single vertex decides containment for the whole layer.
    """
    tri = env.triangles
    surf = other.surface
    lo, hi = env.bounds
    v = surf.vertices
    if np.any(v.max(axis=0) < lo) or np.any(v.min(axis=0) > hi):
        return False
    if points_inside(v[:1], tri)[0]:
        return True
    return any_triangle_intersection(surf.vertices[surf.triangles], tri)


@dataclass
class PCSTable:
    """Potential collision surfaces: ``table[key]`` lists layers hit by the
    envelope of layer ``key``."""

    table: dict
    cone: NozzleCone = None
    seconds: float = 0.0

    def __getitem__(self, key):
        return self.table.get(tuple(key), [])

    def __iter__(self):
        return iter(self.table)

    def __len__(self):
        return len(self.table)

    @property
    def n_entries(self):
        return sum(len(v) for v in self.table.values())

    def blockers(self):
        """Reverse map: layer -> layers whose envelope it intersects."""
        rev = {k: [] for k in self.table}
        for k, hits in self.table.items():
            for h in hits:
                rev.setdefault(h, []).append(k)
        return {k: sorted(v) for k, v in rev.items()}

    def to_dict(self):
        return {f"{k[0]}_{k[1]}": [f"{h[0]}_{h[1]}" for h in v] for k, v in sorted(self.table.items())}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @staticmethod
    def _key(text):
        i, j = str(text).split("_")
        return (int(i), int(j))

    @classmethod
    def from_dict(cls, data, nodes=None):
        table = {cls._key(k): sorted(cls._key(h) for h in v) for k, v in data.items()}
        for k, v in table.items():
            if k in v:
                raise ValueError(f"PCS table lists {k} as colliding with itself")
        if nodes is not None:
            known = set(map(tuple, nodes))
            for k, v in table.items():
                bad = [x for x in [k, *v] if x not in known]
                if bad:
                    raise ValueError(f"PCS table references unknown layer {bad[0]}")
            for k in known:
                table.setdefault(k, [])
        return cls(table)

    @classmethod
    def from_json(cls, path, nodes=None):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), nodes)


def thread_count():
    """Worker threads, capped by ``GEOSLICE_THREADS`` when set."""
    cap = os.environ.get("GEOSLICE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"GEOSLICE_THREADS must be an integer, got {cap!r}") from None
    return n


def _descendants(tree, key):
    seen, stack = set(), [key]
    while stack:
        for u in tree.upper_nodes(stack.pop()):
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return seen


def compute_pcs_table(layers, cone, tree=None, boundary_samples=DEFAULT_SAMPLES, adaptive=True,
                      threads=None, axis="mean"):
    """Potential collision surfaces of every layer.

    Only layers that could be printed *before* ``S`` are tested against its
    envelope: strictly lower layers and (when ``tree`` is given) layers
    above ``S`` on its own branch are skipped, because the precedence rule
    already prints them on the correct side of ``S``.
    """
    import time

    if not isinstance(cone, NozzleCone):
        cone = NozzleCone(*cone)
    start = time.perf_counter()
    surfaces = list(layers)

    def work(s):
        env = sweep_envelope(s, cone, boundary_samples, adaptive, axis)
        skip = _descendants(tree, s.key) if tree is not None else set()
        hits = []
        for o in surfaces:
            if o is s or o.layer_index < s.layer_index or o.key in skip:
                continue
            if envelopes_intersect(env, o):
                hits.append(o.key)
        return s.key, sorted(hits)

    n = threads if threads is not None else thread_count()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(work, surfaces))
    else:
        results = [work(s) for s in surfaces]
    table = dict(results)
    elapsed = time.perf_counter() - start
    logger.debug("PCS table: %d layers, %d entries, %.2fs", len(table), sum(map(len, table.values())),
                 elapsed)
    return PCSTable(table, cone, elapsed)
