"""Overhang and layer-thickness measurements of iso-distance surfaces."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive
from .geometry import closest_points_on_segments, closest_points_on_triangles, ray_triangle_distances

# Angles below this are numerical noise from faceting, not overhang.
ANGLE_TOL_DEG = 0.5


@dataclass(frozen=True)
class OverhangReport:
    key: tuple
    avg_angle_deg: float
    ratio: float
    sample_angles_deg: np.ndarray
    sample_lengths: np.ndarray
    sample_points: np.ndarray


@dataclass(frozen=True)
class ThicknessReport:
    key: tuple
    thickness: np.ndarray
    points: np.ndarray
    mean: float
    max_deviation_pct: float


def sample_boundary(s, step):
    """Points, unit normals and arc-length weights along every boundary loop.

    Each loop edge is split into ``ceil(length / step)`` pieces; normals are
    linearly blended from the vertex normals.
    """
    v = s.surface.vertices
    nrm = s.normals
    pts, nrms, wts = [], [], []
    for loop in s.boundary_loops:
        loop = np.asarray(loop)
        a, b = loop, np.roll(loop, -1)
        seg = np.linalg.norm(v[b] - v[a], axis=1)
        k = np.maximum(1, np.ceil(seg / step).astype(int))
        e = np.repeat(np.arange(len(a)), k)
        t = np.concatenate([np.arange(n) / n for n in k])
        pts.append(v[a[e]] + t[:, None] * (v[b[e]] - v[a[e]]))
        nn = (1 - t)[:, None] * nrm[a[e]] + t[:, None] * nrm[b[e]]
        nrms.append(nn)
        # a sample owns the arc between its two neighbouring midpoints
        ln = np.repeat(seg / k, k)
        wts.append(0.5 * (ln + np.roll(ln, 1)))
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    n = np.concatenate(nrms)
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    return np.concatenate(pts), n, np.concatenate(wts)


def _prev_triangles(prev):
    tris = [p.surface.vertices[p.surface.triangles] for p in prev if p is not None]
    return np.concatenate(tris) if tris else np.zeros((0, 3, 3))


def _prev_boundary_segments(prev):
    a, b = [], []
    for p in prev:
        if p is None:
            continue
        v = p.surface.vertices
        for loop in p.boundary_loops:
            loop = np.asarray(loop)
            a.append(v[loop])
            b.append(v[np.roll(loop, -1)])
    if not a:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.concatenate(a), np.concatenate(b)


def _prune(tris, lo, hi):
    if len(tris) == 0:
        return tris
    tl, th = tris.min(axis=1), tris.max(axis=1)
    return tris[np.all((th >= lo) & (tl <= hi), axis=1)]


def overhang_metrics(s, prev, interval, angle_tol_deg=ANGLE_TOL_DEG):
    """Average overhang angle and overhang ratio along the boundary of ``s``.

    A boundary sample P is supported (angle 0) when the ray from P against
    the layer normal meets a previous surface within ``2 * interval``.
    Otherwise the angle is measured between ``P - P'`` and the normal,
    with P' the nearest point on the previous boundary loops. Angles at or
    below ``angle_tol_deg`` count as supported.
    """
    d = check_positive(interval, "interval")
    key = s.key
    pts, nrm, w = sample_boundary(s, d / 4)
    if len(pts) == 0:
        return OverhangReport(key, 0.0, 0.0, np.zeros(0), np.zeros(0), pts)
    lo, hi = pts.min(0) - 2 * d, pts.max(0) + 2 * d
    tris = _prune(_prev_triangles(prev), lo, hi)
    t = ray_triangle_distances(pts, -nrm, tris, max_t=2 * d)
    angle = np.zeros(len(pts))
    miss = ~np.isfinite(t)
    a, b = _prev_boundary_segments(prev)
    if miss.any() and len(a):
        cp, _, _ = closest_points_on_segments(pts[miss], a, b)
        vec = pts[miss] - cp
        ln = np.linalg.norm(vec, axis=1)
        cosang = np.einsum("ij,ij->i", vec, nrm[miss]) / np.maximum(ln, 1e-300)
        ang = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
        angle[miss] = np.where(ln > 0, ang, 0.0)
    angle[angle <= angle_tol_deg] = 0.0
    over = angle > 0
    total = w.sum()
    lover = w[over].sum()
    avg = float((angle * w).sum() / lover) if lover > 0 else 0.0
    return OverhangReport(key, avg, float(lover / total), angle, w, pts)


def layer_thickness(s, prev, interval, interior_only=True):
    """Per-vertex thickness between ``s`` and the layers in ``prev``.

    Measured along the reversed normal from each interior vertex (every
    vertex with ``interior_only=False``) to the first previous surface;
    where no hit exists the closest-point distance is used instead.
    """
    d = check_positive(interval, "interval")
    surf = s.surface
    interior = ~surf.boundary_vertex_mask if interior_only else np.ones(surf.n_vertices, dtype=bool)
    if not interior.any():
        interior = np.ones(surf.n_vertices, dtype=bool)
    pts = surf.vertices[interior]
    nrm = s.normals[interior]
    tris = _prev_triangles(prev)
    h = np.full(len(pts), np.inf)
    if len(tris):
        near = _prune(tris, pts.min(0) - 3 * d, pts.max(0) + 3 * d)
        h = ray_triangle_distances(pts, -nrm, near, max_t=3 * d)
        miss = ~np.isfinite(h)
        if miss.any():
            _, h[miss] = closest_points_on_triangles(pts[miss], tris)
    h = np.maximum(h, 1e-12)
    dev = 100.0 * np.abs(h - d) / d
    return ThicknessReport(s.key, h, pts, float(h.mean()), float(dev.max()))


def previous_layers(layers, s, tree=None):
    """IGDSs of layer ``i - 1`` adjacent to ``s`` (all of them without a tree)."""
    i = s.layer_index
    if i <= 1:
        return [layers.base] if layers.base is not None else []
    if tree is not None:
        lower = tree.lower_nodes(s.key)
        if lower:
            return [layers.get(k) for k in lower]
    return list(layers.layer(i - 1))
