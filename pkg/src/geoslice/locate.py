"""Point location in tet meshes and piecewise-linear field sampling."""

import numpy as np
from scipy.spatial import cKDTree

_BARY_TOL = 1e-10


class TetLocator:
    """Find the tet containing each query point.

    Candidates come from the nearest tet centroids; misses are re-checked
    against every tet whose centroid lies within the largest
    centroid-to-vertex radius, which is exhaustive.
    """

    def __init__(self, mesh, k=16):
        self.mesh = mesh
        self.k = min(k, mesh.n_tets)
        p = mesh.vertices[mesh.tets]
        self._origin = p[:, 3]
        T = np.transpose(p[:, :3] - p[:, 3:4], (0, 2, 1))  # columns v_i - v_3
        self._inv = np.linalg.inv(T)
        cent = mesh.centroids
        self._tree = cKDTree(cent)
        self._radius = float(np.linalg.norm(p - cent[:, None], axis=2).max())

    def _bary(self, pts, cand):
        rel = pts[:, None, :] - self._origin[cand]
        lam = np.einsum("nkij,nkj->nki", self._inv[cand], rel)
        return np.concatenate([lam, 1.0 - lam.sum(axis=2, keepdims=True)], axis=2)

    def locate(self, points, tol=_BARY_TOL):
        """Return ``(tet_index, barycentric)``; index -1 for points outside."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        n = len(pts)
        tet = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 4))
        if n == 0:
            return tet, bary
        _, cand = self._tree.query(pts, k=self.k)
        cand = cand.reshape(n, -1)
        lam = self._bary(pts, cand)
        score = lam.min(axis=2)
        best = np.argmax(score, axis=1)
        ok = score[np.arange(n), best] >= -tol
        tet[ok] = cand[ok, best[ok]]
        bary[ok] = lam[ok, best[ok]]
        for q in np.flatnonzero(~ok):
            near = self._tree.query_ball_point(pts[q], self._radius)
            if not near:
                continue
            near = np.asarray(near)
            l2 = self._bary(pts[q:q + 1], near[None])[0]
            s = l2.min(axis=1)
            b = int(np.argmax(s))
            if s[b] >= -tol:
                tet[q] = near[b]
                bary[q] = l2[b]
        return tet, bary

    def interpolate(self, points, values, outside=np.nan):
        tet, bary = self.locate(points)
        vals = np.asarray(values, dtype=float)
        out = np.full(len(tet), outside, dtype=float)
        ok = tet >= 0
        out[ok] = np.einsum("nk,nk->n", bary[ok], vals[self.mesh.tets[tet[ok]]])
        return out

