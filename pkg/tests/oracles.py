"""Independent reference computations used by the tests.

Each oracle is deliberately naive (per-element loops, dense sampling) and
shares no code with the implementation beyond mesh containers and the
point locator.
"""

import itertools

import numpy as np
from scipy.spatial import cKDTree

from geoslice.geodesic import tet_gradients
from geoslice.locate import TetLocator


def regular_tet_cot_weight(edge=1.0):
    """``l_opp * cot(theta) / 6`` for a regular tet, theta its dihedral angle."""
    theta = np.arccos(1.0 / 3.0)
    return edge / np.tan(theta) / 6.0


def marching_brute_force(mesh, phi, level, eps):
    """Per-tet level-set polygons: {tet: (points (k, 3), area, normal)}.

    Values within ``eps`` of the level count as above it.
    """
    out = {}
    s = np.asarray(phi, dtype=float) - level
    s = np.where(np.abs(s) < eps, eps, s)
    for t, tet in enumerate(mesh.tets):
        v = mesh.vertices[tet]
        f = s[tet]
        if f.max() <= 0 or f.min() >= 0:
            continue
        pts = []
        for a, b in itertools.combinations(range(4), 2):
            if (f[a] > 0) != (f[b] > 0):
                w = f[a] / (f[a] - f[b])
                pts.append(v[a] + w * (v[b] - v[a]))
        pts = np.array(pts)
        # the level set of a linear function is planar: area from a
        # convex-hull ordering around the centroid
        c = pts.mean(axis=0)
        grad = np.linalg.solve(v[:3] - v[3], f[:3] - f[3])
        n = grad / np.linalg.norm(grad)
        u = pts[0] - c
        u -= n * (u @ n)
        u /= np.linalg.norm(u)
        w = np.cross(n, u)
        ang = np.arctan2((pts - c) @ w, (pts - c) @ u)
        ring = pts[np.argsort(ang)]
        area = 0.0
        for i in range(1, len(ring) - 1):
            area += 0.5 * np.linalg.norm(np.cross(ring[i] - ring[0], ring[i + 1] - ring[0]))
        out[t] = (pts, area, n)
    return out


def streamline_edges(mesh, phi, layers, step_frac=0.2, min_hits=2):
    """Tree edges implied by tracing triangle centroids down the field.

    Each centroid of a layer-i surface (i >= 2) follows ``-grad phi`` until
    it reaches ``(i - 1) d``; the layer-(i-1) component nearest to the end
    point receives a hit. A pair is adjacent with at least ``min_hits`` hits
    (or when it takes all hits of the surface).
    """
    d = layers.interval
    loc = TetLocator(mesh)
    G = tet_gradients(mesh, phi)
    h = step_frac * mesh.mean_edge_length
    edges = set()
    for i in range(2, layers.n_layers + 1):
        lower = layers.layer(i - 1)
        kd = cKDTree(np.vstack([s.surface.vertices for s in lower]))
        lab = np.concatenate([np.full(s.surface.n_vertices, k) for k, s in enumerate(lower)])
        target = (i - 1) * d
        for s in layers.layer(i):
            x = s.surface.vertices[s.surface.triangles].mean(axis=1)
            for _ in range(int(3 * d / h) + 50):
                t, bary = loc.locate(x)
                ok = t >= 0
                val = np.full(len(x), -np.inf)
                val[ok] = np.einsum("nk,nk->n", bary[ok], phi[mesh.tets[t[ok]]])
                act = ok & (val > target + 1e-6)
                if not act.any():
                    break
                g = G[t[act]]
                gn = np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-12)
                step = np.minimum(h, (val[act] - target)[:, None] / gn)
                x[act] -= step * g / gn
            _, nn = kd.query(x)
            hits = np.bincount(lab[nn], minlength=len(lower))
            for k, c in enumerate(hits):
                if c >= min_hits or (c > 0 and c == hits.sum()):
                    edges.add((lower[k].key, s.key))
    return edges


def sample_surface(surface, n, rng):
    """``n`` area-uniform random points on a triangle mesh."""
    a = surface.areas
    t = rng.choice(len(a), n, p=a / a.sum())
    r = rng.random((n, 2))
    flip = r.sum(axis=1) > 1
    r[flip] = 1 - r[flip]
    v = surface.vertices[surface.triangles[t]]
    return v[:, 0] + r[:, :1] * (v[:, 1] - v[:, 0]) + r[:, 1:] * (v[:, 2] - v[:, 0])


def any_point_in_cones(apexes, axis, points, half_angle_deg, height, chunk=32):
    """Exact containment of any point in any truncated cone with the given apexes."""
    ca = np.cos(np.radians(half_angle_deg))
    axis = np.asarray(axis, dtype=float)
    for i in range(0, len(apexes), chunk):
        v = points[None, :, :] - apexes[i:i + chunk, None, :]
        along = v @ axis
        norm = np.linalg.norm(v, axis=2)
        if np.any((along > 1e-9) & (along <= height) & (along >= norm * ca)):
            return True
    return False


def polyline_distance(points, polyline):
    """Distance from each point to a closed polyline."""
    a = polyline
    b = np.roll(polyline, -1, axis=0)
    ab = b - a
    ap = points[:, None, :] - a[None]
    t = np.clip(np.einsum("pnk,nk->pn", ap, ab) / np.maximum((ab * ab).sum(1), 1e-300), 0, 1)
    q = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - q, axis=2).min(axis=1)


def random_tet_mesh(rng, n_points=None):
    """Delaunay mesh of random points in the unit cube, slivers dropped."""
    from scipy.spatial import Delaunay

    from geoslice.mesh import TetMesh, signed_volumes

    n = int(rng.integers(6, 25)) if n_points is None else n_points
    pts = rng.random((n, 3))
    tets = Delaunay(pts).simplices
    tets = tets[np.abs(signed_volumes(pts, tets)) > 1e-5]
    return TetMesh(pts, tets)


def extraction_mismatches(mesh, phi, level, surfaces, eps, tol=1e-9):
    """Differences between extracted surfaces and the brute-force polygons."""
    ref = marching_brute_force(mesh, phi, level, eps)
    got = {}
    problems = []
    for s in surfaces:
        v = s.surface.vertices
        for tri, t in zip(s.surface.triangles, s.tet_ids):
            p = v[tri]
            entry = got.setdefault(int(t), [[], 0.0, 0])
            entry[0].extend(p)
            entry[1] += 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))
            entry[2] += 1
            if t in ref and np.cross(p[1] - p[0], p[2] - p[0]) @ ref[int(t)][2] <= 0:
                problems.append(f"tet {t}: triangle oriented against the gradient")
    if set(got) != set(ref):
        problems.append(f"straddling tets differ: {sorted(set(got) ^ set(ref))[:5]}")
        return problems
    for t, (pts, area, _) in ref.items():
        gp, garea, ntri = got[t]
        gp = np.unique(np.round(np.array(gp), 9), axis=0)
        rp = np.unique(np.round(pts, 9), axis=0)
        if gp.shape != rp.shape or np.abs(gp - rp).max() > tol * 10:
            problems.append(f"tet {t}: crossing points differ")
        if abs(garea - area) > max(tol, 1e-7 * area):
            problems.append(f"tet {t}: area {garea} vs {area}")
        if ntri != len(pts) - 2:
            problems.append(f"tet {t}: {ntri} triangles for {len(pts)} crossings")
    return problems
