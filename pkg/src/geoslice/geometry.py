"""Vectorised geometric predicates used by metrics and collision checks."""

import numpy as np
from scipy.spatial import cKDTree

_CHUNK = 1 << 20
_BRUTE_PAIRS = 200_000


def _chunks(n_rows, n_cols):
    step = max(1, _CHUNK // max(n_cols, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def _mt(o, d, v0, e1, e2, eps):
    """Moller-Trumbore on broadcastable arrays; returns t (inf on miss)."""
    p = np.cross(d, e2)
    det = np.sum(p * e1, axis=-1)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - v0
    u = np.sum(s * p, axis=-1) * inv
    q = np.cross(s, e1)
    v = np.sum(d * q, axis=-1) * inv
    t = np.sum(e2 * q, axis=-1) * inv
    hit = ok & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1 + 1e-12) & (t > eps)
    return np.where(hit, t, np.inf)


def ray_triangle_distances(origins, directions, triangles, max_t=None, eps=1e-12):
    """First-hit parameter of each ray against a triangle soup.

    Parameters
    ----------
    origins, directions : (n, 3) arrays
        The returned ``t`` is in units of the direction length.
    triangles : (m, 3, 3) array
    max_t : float, optional
        Ignore hits beyond this parameter. Bounded queries on large inputs
        only test triangles near each ray (KD-tree on triangle centroids).

    Returns
    -------
    t : (n,) array, ``inf`` where the ray misses (only ``t > eps`` counts).
    """
    o = np.asarray(origins, dtype=float).reshape(-1, 3)
    d = np.asarray(directions, dtype=float).reshape(-1, 3)
    tri = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    out = np.full(len(o), np.inf)
    if len(tri) == 0 or len(o) == 0:
        return out
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    if max_t is not None and len(o) * len(tri) > _BRUTE_PAIRS:
        ray, cand = _ray_candidates(o, d, tri, max_t)
        if ray.size:
            t = _mt(o[ray], d[ray], v0[cand], e1[cand], e2[cand], eps)
            np.minimum.at(out, ray, t)
    else:
        for sl in _chunks(len(o), len(tri)):
            t = _mt(o[sl, None, :], d[sl, None, :], v0[None], e1[None], e2[None], eps)
            out[sl] = t.min(axis=1)
    if max_t is not None:
        out[out > max_t] = np.inf
    return out


def _ray_candidates(o, d, tri, max_t):
    """(ray, triangle) pairs whose bounding spheres meet the ray segment."""
    cent = tri.mean(axis=1)
    rad = np.linalg.norm(tri - cent[:, None], axis=2).max()
    tree = cKDTree(cent)
    length = np.linalg.norm(d, axis=1) * max_t
    step = max(rad, 1e-12)
    k = int(np.ceil(length.max() / step)) + 1
    ts = np.linspace(0.0, 1.0, k)
    probes = o[:, None, :] + ts[None, :, None] * (d * max_t)[:, None, :]
    hits = tree.query_ball_point(probes.reshape(-1, 3), rad + 0.5 * step + 1e-12)
    rays, cands = [], []
    for q, lst in enumerate(hits):
        if lst:
            rays.append(np.full(len(lst), q // k))
            cands.append(lst)
    if not rays:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = np.unique(np.column_stack([np.concatenate(rays), np.concatenate(cands)]), axis=0)
    return pairs[:, 0], pairs[:, 1]


def closest_points_on_segments(points, a, b):
    """Closest point to each query on a set of segments ``a[k]`` to ``b[k]``.

    Returns ``(closest (n, 3), distance (n,), segment index (n,))``.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    den = np.where(den > 0, den, 1.0)
    best = np.zeros((len(p), 3))
    dist = np.full(len(p), np.inf)
    idx = np.zeros(len(p), dtype=np.int64)
    for sl in _chunks(len(p), len(a)):
        rel = p[sl, None, :] - a[None]
        t = np.clip(np.einsum("rsk,sk->rs", rel, ab) / den, 0.0, 1.0)
        c = a[None] + t[..., None] * ab[None]
        dd = np.linalg.norm(p[sl, None, :] - c, axis=2)
        k = np.argmin(dd, axis=1)
        rows = np.arange(dd.shape[0])
        best[sl] = c[rows, k]
        dist[sl] = dd[rows, k]
        idx[sl] = k
    return best, dist, idx


def closest_points_on_triangles(points, triangles):
    """Closest point on a triangle soup (Ericson's region test, vectorised).

    Returns ``(closest (n, 3), distance (n,))``. Large inputs are pruned
    exactly: a triangle can only win if its centroid lies within the
    nearest-centroid distance plus the largest triangle radius.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    tri = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    best = np.zeros((len(p), 3))
    dist = np.full(len(p), np.inf)
    if len(p) == 0 or len(tri) == 0:
        return best, dist
    if len(p) * len(tri) > _BRUTE_PAIRS:
        cent = tri.mean(axis=1)
        rad = np.linalg.norm(tri - cent[:, None], axis=2).max()
        tree = cKDTree(cent)
        dc, _ = tree.query(p)
        lists = tree.query_ball_point(p, dc + rad + 1e-12)
        sizes = np.array([len(x) for x in lists])
        q = np.repeat(np.arange(len(p)), sizes)
        t = np.concatenate([np.asarray(x, dtype=np.int64) for x in lists])
        c = _closest_on_tris(p[q], tri[t, 0], tri[t, 1], tri[t, 2])
        dd = np.linalg.norm(c - p[q], axis=1)
        order = np.lexsort((dd, q))
        first = order[np.r_[0, np.flatnonzero(np.diff(q[order])) + 1]]
        best[q[first]] = c[first]
        dist[q[first]] = dd[first]
        return best, dist
    for sl in _chunks(len(p), 3 * len(tri)):
        c = _closest_on_tris(p[sl, None, :], tri[None, :, 0], tri[None, :, 1], tri[None, :, 2])
        dd = np.linalg.norm(c - p[sl, None, :], axis=2)
        k = np.argmin(dd, axis=1)
        rows = np.arange(len(k))
        best[sl] = c[rows, k]
        dist[sl] = dd[rows, k]
    return best, dist


def _closest_on_tris(P, a, b, c):
    P, a, b, c = np.broadcast_arrays(P, a, b, c)
    ab, ac, ap = b - a, c - a, P - a

    def dot(x, y):
        return np.sum(x * y, axis=-1)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = P - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = P - c
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    den = va + vb + vc
    den = np.where(np.abs(den) > 1e-300, den, 1e-300)
    out = a + (vb / den)[..., None] * ab + (vc / den)[..., None] * ac

    def put(mask, val):
        nonlocal out
        out = np.where(mask[..., None], val, out)

    # edge regions first, vertex regions last so they take priority
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.nan_to_num((d4 - d3) / ((d4 - d3) + (d5 - d6)))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + t[..., None] * (c - b))
        t = np.nan_to_num(d2 / (d2 - d6))
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t[..., None] * ac)
        t = np.nan_to_num(d1 / (d1 - d3))
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t[..., None] * ab)
    put((d6 >= 0) & (d5 <= d6), c)
    put((d3 >= 0) & (d4 <= d3), b)
    put((d1 <= 0) & (d2 <= 0), a)
    return out


def _segments_hit_triangles(p0, p1, tri, eps=1e-12):
    """For paired rows: does segment ``p0[k]-p1[k]`` cross triangle ``tri[k]``?"""
    d = p1 - p0
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    h = np.cross(d, e2)
    det = np.einsum("ij,ij->i", h, e1)
    ok = np.abs(det) > eps * (np.linalg.norm(d, axis=1) * np.linalg.norm(e1, axis=1)
                              * np.linalg.norm(e2, axis=1) + 1e-300)
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = p0 - v0
    u = np.einsum("ij,ij->i", s, h) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", d, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def triangles_intersect(A, B):
    """Pairwise test of triangle rows ``A[k]`` vs ``B[k]`` (both (n, 3, 3)).

    Two non-coplanar triangles intersect iff an edge of one crosses the
    other; coplanar contact is not reported, which is harmless for the
    volume tests built on top of this.
    """
    A = np.asarray(A, dtype=float).reshape(-1, 3, 3)
    B = np.asarray(B, dtype=float).reshape(-1, 3, 3)
    hit = np.zeros(len(A), dtype=bool)
    for X, Y in ((A, B), (B, A)):
        for i, j in ((0, 1), (1, 2), (2, 0)):
            todo = ~hit
            if not todo.any():
                return hit
            hit[todo] |= _segments_hit_triangles(X[todo, i], X[todo, j], Y[todo])
    return hit


def any_triangle_intersection(tris_a, tris_b):
    """True if any triangle of soup ``a`` intersects any of soup ``b``."""
    A = np.asarray(tris_a, dtype=float).reshape(-1, 3, 3)
    B = np.asarray(tris_b, dtype=float).reshape(-1, 3, 3)
    if len(A) == 0 or len(B) == 0:
        return False
    lo_b, hi_b = B.min(axis=1), B.max(axis=1)
    lo_a, hi_a = A.min(axis=1), A.max(axis=1)
    # restrict each soup to the other's overall box first
    keep_a = np.all((hi_a >= lo_b.min(0)) & (lo_a <= hi_b.max(0)), axis=1)
    keep_b = np.all((hi_b >= lo_a.min(0)) & (lo_b <= hi_a.max(0)), axis=1)
    A, lo_a, hi_a = A[keep_a], lo_a[keep_a], hi_a[keep_a]
    B, lo_b, hi_b = B[keep_b], lo_b[keep_b], hi_b[keep_b]
    if len(A) == 0 or len(B) == 0:
        return False
    for sl in _chunks(len(A), len(B)):
        over = np.all((hi_a[sl, None] >= lo_b[None]) & (lo_a[sl, None] <= hi_b[None]), axis=2)
        ia, ib = np.nonzero(over)
        if ia.size and triangles_intersect(A[sl][ia], B[ib]).any():
            return True
    return False


_PARITY_DIRS = np.array([[0.5773, 0.5774, 0.5775], [-0.6154, 0.2479, 0.7482],
                         [0.1103, -0.8430, 0.5264]])


def points_inside(points, triangles):
    """Containment in a closed triangle mesh by ray-parity majority vote.

    Three skewed rays are cast per point; the majority of the parity votes
    decides, which absorbs the rare ray grazing an edge.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    tri = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    inside = np.zeros(len(p), dtype=bool)
    if len(p) == 0 or len(tri) == 0:
        return inside
    lo, hi = tri.reshape(-1, 3).min(0), tri.reshape(-1, 3).max(0)
    cand = np.flatnonzero(np.all((p >= lo) & (p <= hi), axis=1))
    if cand.size == 0:
        return inside
    votes = np.zeros(cand.size, dtype=int)
    for direction in _PARITY_DIRS:
        votes += _crossing_counts(p[cand], direction / np.linalg.norm(direction), tri) % 2
    inside[cand] = votes >= 2
    return inside


def _crossing_counts(o, d, tri, eps=1e-12):
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    h = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    counts = np.zeros(len(o), dtype=int)
    for sl in _chunks(len(o), len(tri)):
        s = o[sl, None, :] - v0[None]
        u = np.einsum("rtk,tk->rt", s, h) * inv
        q = np.cross(s, e1[None])
        v = (q @ d) * inv
        t = np.einsum("tk,rtk->rt", e2, q) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v < 1) & (t > eps)
        counts[sl] = hit.sum(axis=1)
    return counts
