"""Volumetric heat-method geodesic distance on tetrahedral meshes.

Pipeline: assemble the cotangent Laplacian ``L_c`` and lumped vertex
volumes ``V``, diffuse heat from the source set for a short time
``t = c * h**2``, normalise the per-tet temperature gradient, take its
integrated divergence and recover the distance from ``L_c phi = b``.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_field, check_points, check_positive
from .exceptions import MeshError, MeshQualityWarning, SolverError
from .mesh import (OPPOSITE_EDGE, TET_EDGES, TET_FACES, TetMesh, boundary_surface,
                   select_base_vertices, vertex_volumes)

logger = logging.getLogger(__name__)

NEGATIVE_WEIGHT_WARN_FRACTION = 0.05
_SIN_EPS = 1e-12
BOUNDARY_MODES = ("absorbing", "neumann")


@dataclass(frozen=True)
class FieldParams:
    """Heat-method parameters.

    Attributes
    ----------
    time_scale : float
        Multiplier ``c`` in ``t = c * h**2`` (h = mean edge length).
    tol : float
        Relative residual every linear solve must reach.
    boundary : {"absorbing", "neumann"}
        Heat-step boundary treatment. ``"neumann"`` solves
        ``(V - t L_c) u = V u0`` with insulated walls everywhere.
        ``"absorbing"`` holds ``u = 1`` on the source and ``u = 0`` on
        outflow faces, i.e. boundary faces the first-pass flow leaves
        through head-on; this removes the vanishing-gradient noise at the
        far end of the part.
    outflow_cos : float
        A boundary face is outflow when the cosine between its outward
        normal and the first-pass flow exceeds this value.
    """

    time_scale: float = 1.0
    tol: float = 1e-10
    boundary: str = "absorbing"
    outflow_cos: float = 0.7

    def __post_init__(self):
        check_positive(self.time_scale, "time_scale")
        check_positive(self.tol, "tol", upper=1e-4)
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")
        check_positive(self.outflow_cos, "outflow_cos", upper=1.0)


@dataclass(frozen=True)
class SparseOperator:
    """Assembled Laplacian of a tet mesh.

    ``L`` is the symmetric cotangent matrix (negative semidefinite, zero row
    sums), ``volumes`` the lumped vertex volumes and ``weights`` the edge
    weights ordered like ``mesh.edges``.
    """

    mesh: TetMesh
    L: sparse.csr_matrix
    volumes: np.ndarray
    weights: np.ndarray
    h: float


@dataclass(frozen=True)
class GradientField:
    """Unit per-tet vector field pointing toward increasing distance."""

    vectors: np.ndarray
    valid: np.ndarray
    raw: np.ndarray


def _face_area_vectors(points):
    """Outward area vectors (2 x area x unit normal) of the faces opposite
    each local vertex; ``points`` has shape (m, 4, 3)."""
    f = TET_FACES
    a = points[:, f[:, 0]]
    b = points[:, f[:, 1]]
    c = points[:, f[:, 2]]
    return np.cross(b - a, c - a)


def edge_weights(mesh):
    """Per-tet contributions ``l_k cot(theta_k) / 6`` for each local edge.

    ``theta_k`` is the dihedral angle at the edge opposite the local edge,
    ``l_k`` that opposite edge's length.

    Returns
    -------
    ndarray, shape (m, 6)
    """
    p = mesh.vertices[mesh.tets]
    N = _face_area_vectors(p)
    contrib = np.empty((mesh.n_tets, 6))
    for e, (i, j) in enumerate(TET_EDGES):
        # the opposite edge (p, q) is shared by the faces opposite i and j
        ni, nj = N[:, i], N[:, j]
        cos = -np.einsum("ij,ij->i", ni, nj)
        sin = np.linalg.norm(np.cross(ni, nj), axis=1)
        if np.any(sin <= _SIN_EPS * np.linalg.norm(ni, axis=1) * np.linalg.norm(nj, axis=1)):
            bad = int(np.flatnonzero(sin <= _SIN_EPS * np.linalg.norm(ni, axis=1)
                                     * np.linalg.norm(nj, axis=1))[0])
            raise MeshError(f"degenerate dihedral angle (0 or pi) in tet {bad}")
        pq = TET_EDGES[OPPOSITE_EDGE[e]]
        length = np.linalg.norm(p[:, pq[1]] - p[:, pq[0]], axis=1)
        contrib[:, e] = length * cos / sin / 6.0
    return contrib


def build_laplacian(mesh):
    """Assemble the cotangent Laplacian ``L_c`` and vertex volumes.

    Off-diagonal entries are the edge weights ``w_ij``; each diagonal entry
    is minus the sum of its row's off-diagonals.
    """
    contrib = edge_weights(mesh)
    n = mesh.n_vertices
    w = np.zeros(len(mesh.edges))
    np.add.at(w, mesh.tet_edges.reshape(-1), contrib.reshape(-1))
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    off = sparse.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    L = (off + sparse.diags(diag)).tocsr()
    L.sort_indices()
    frac = float(np.mean(w < 0))
    if frac > NEGATIVE_WEIGHT_WARN_FRACTION:
        warnings.warn(
            f"{100 * frac:.1f}% of edge weights are negative; geodesic accuracy may suffer",
            MeshQualityWarning, stacklevel=2)
    return SparseOperator(mesh=mesh, L=L, volumes=vertex_volumes(mesh), weights=w,
                          h=mesh.mean_edge_length)


def _solve(A, rhs, tol, what):
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"{what}: singular system ({exc})") from None
    x = lu.solve(rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    res = np.linalg.norm(A @ x - rhs) / scale
    for _ in range(3):
        if res <= tol:
            break
        x = x + lu.solve(rhs - A @ x)
        res = np.linalg.norm(A @ x - rhs) / scale
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError(f"{what}: relative residual {res:.3e} exceeds {tol:.1e}", res)
    return x


def _check_source(source, n):
    src = np.unique(np.asarray(source, dtype=np.int64).reshape(-1))
    if src.size == 0:
        raise MeshError("heat source is empty")
    if src.min() < 0 or src.max() >= n:
        raise MeshError("heat source index out of range")
    return src


def solve_heat(op, source, params=FieldParams(), absorbing=None):
    """Temperature after diffusing heat from ``source`` for ``t = c h**2``.

    With ``params.boundary == "neumann"`` this is ``(V - t L_c) u = V u0``.
    Otherwise the source rows are replaced by ``u = 1`` and the vertices in
    ``absorbing`` by ``u = 0``.
    """
    n = op.mesh.n_vertices
    src = _check_source(source, n)
    t = params.time_scale * op.h ** 2
    A = (sparse.diags(op.volumes) - t * op.L).tocsr()
    if params.boundary == "neumann":
        u0 = np.zeros(n)
        u0[src] = 1.0
        return _solve(A, op.volumes * u0, params.tol, "heat diffusion")
    u = np.zeros(n)
    u[src] = 1.0
    free = np.ones(n, dtype=bool)
    free[src] = False
    if absorbing is not None:
        free[np.asarray(absorbing, dtype=np.int64)] = False
    if free.any():
        rhs = -(A[free][:, src] @ np.ones(src.size))
        u[free] = _solve(A[free][:, free], rhs, params.tol, "heat diffusion")
    return u


def outflow_vertices(mesh, X, source, cos_min=0.7, phi=None, ledge_rise=None):
    """Boundary vertices on faces that the flow ``X`` leaves head-on.

    ``X`` is averaged onto vertices, then onto boundary faces; a face is
    outflow when ``cos(X, n_out) > cos_min``. Source vertices are excluded.

    With a first-pass distance ``phi``, connected outflow patches that are
    ledges are dropped: a ledge is a patch touched by another boundary face
    rising more than ``ledge_rise`` above the shared rim (a step from which a
    wall continues, as on top of a trunk between branches). Default rise is
    half the mean edge length.
    """
    surf, parent = boundary_surface(mesh)
    vec = X.vectors if isinstance(X, GradientField) else np.asarray(X, dtype=float)
    acc = np.zeros((mesh.n_vertices, 3))
    np.add.at(acc, mesh.tets.reshape(-1), np.repeat(vec, 4, axis=0))
    tri = parent[surf.triangles]
    fx = acc[tri].sum(axis=1)
    fx /= np.maximum(np.linalg.norm(fx, axis=1, keepdims=True), 1e-300)
    hit = np.einsum("ij,ij->i", fx, surf.face_normals) > cos_min
    if phi is not None and hit.any():
        rise = 0.5 * mesh.mean_edge_length if ledge_rise is None else float(ledge_rise)
        hit &= ~_ledge_faces(surf, hit, np.asarray(phi, dtype=float)[parent], rise)
    out = np.zeros(mesh.n_vertices, dtype=bool)
    out[tri[hit].reshape(-1)] = True
    out[np.asarray(source)] = False
    return np.flatnonzero(out)


def _ledge_faces(surf, hit, phi, rise):
    tris = surf.triangles
    idx = np.flatnonzero(hit)
    # patches of outflow faces joined through shared vertices
    rows = np.repeat(np.arange(len(idx)), 3)
    inc = sparse.coo_matrix((np.ones(rows.size), (rows, tris[idx].reshape(-1))),
                            shape=(len(idx), surf.n_vertices)).tocsr()
    _, patch = csgraph.connected_components(inc @ inc.T, directed=False)
    on_patch = np.full(surf.n_vertices, -1)
    on_patch[tris[idx].reshape(-1)] = np.repeat(patch, 3)
    ledge = np.zeros(patch.max() + 1, dtype=bool)
    for f in np.flatnonzero(~hit):
        t = tris[f]
        shared = on_patch[t] >= 0
        if not shared.any():
            continue
        if phi[t].max() - phi[t[shared]].max() > rise:
            ledge[on_patch[t[shared]]] = True
    out = np.zeros(len(hit), dtype=bool)
    out[idx[ledge[patch]]] = True
    return out


def tet_gradients(mesh, u):
    """Piecewise-constant gradient of a vertex field on every tet.

    For tet (i, j, p, q) solves ``[v_i - v_q; v_j - v_q; v_p - v_q] g =
    [u_i - u_q; u_j - u_q; u_p - u_q]``.
    """
    u = check_field(u, mesh.n_vertices, "u")
    p = mesh.vertices[mesh.tets]
    D = p[:, :3] - p[:, 3:4]
    du = u[mesh.tets[:, :3]] - u[mesh.tets[:, 3:4]]
    return np.linalg.solve(D, du[..., None])[..., 0]


def gradient(mesh, u, eps=1e-12):
    """Normalised descent direction ``X = -grad(u) / |grad(u)|`` per tet.

    Tets where ``|grad(u)| < eps`` are flagged invalid and carry a zero vector.
    """
    g = tet_gradients(mesh, u)
    norm = np.linalg.norm(g, axis=1)
    valid = norm >= eps
    X = np.zeros_like(g)
    X[valid] = -g[valid] / norm[valid, None]
    return GradientField(vectors=X, valid=valid, raw=g)


def divergence(mesh, X):
    """Integrated divergence of a per-tet vector field at each vertex.

    ``b_i = sum_k S_k n_k . X_k / 3`` over the tets around vertex i, with
    ``(S_k, n_k)`` the area and unit normal (pointing away from i) of the
    face opposite i. Invalid tets contribute nothing.
    """
    if isinstance(X, GradientField):
        vec = np.where(X.valid[:, None], X.vectors, 0.0)
    else:
        vec = np.asarray(X, dtype=float)
        if vec.shape != (mesh.n_tets, 3):
            raise ValueError(f"vector field must have shape ({mesh.n_tets}, 3)")
    N = _face_area_vectors(mesh.vertices[mesh.tets])  # |N| = 2 S
    flux = np.einsum("mkd,md->mk", N, vec) / 6.0
    b = np.zeros(mesh.n_vertices)
    np.add.at(b, mesh.tets.reshape(-1), flux.reshape(-1))
    return b


def _check_components(mesh, source):
    """One source vertex per connected component; raises if a component has none."""
    e = mesh.edges
    n = mesh.n_vertices
    g = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    ncomp, labels = csgraph.connected_components(g, directed=False)
    pins = []
    for c in range(ncomp):
        hit = source[labels[source] == c]
        if hit.size == 0:
            raise MeshError(f"mesh component {c} contains no source vertex")
        pins.append(int(hit[0]))
    return np.array(pins, dtype=np.int64)


def solve_geodesic(op, b, source, params=FieldParams()):
    """Recover distances from ``L_c phi = b``.

    Every source vertex is pinned to zero, which removes the constant null
    space and keeps the base exactly at distance 0. A mesh component
    without any source vertex is rejected. The final shift (minimum over the
    source set becomes zero) is then a no-op kept for safety.
    """
    n = op.mesh.n_vertices
    src = _check_source(source, n)
    b = check_field(b, n, "b")
    _check_components(op.mesh, src)
    free = np.ones(n, dtype=bool)
    free[src] = False
    phi = np.zeros(n)
    if free.any():
        A = op.L[free][:, free]
        # -L_c restricted to free vertices is positive definite
        phi[free] = _solve(-A, -b[free], params.tol, "Poisson recovery")
    return phi - phi[src].min()


def geodesic_distance_field(mesh, source, params=FieldParams(), return_parts=False):
    """Geodesic distance from ``source`` to every vertex of ``mesh``.

    Parameters
    ----------
    mesh : TetMesh
    source : array_like of int
    params : FieldParams
    return_parts : bool
        Also return the operator, temperature and gradient field.
    """
    op = build_laplacian(mesh)
    u = solve_heat(op, source, params)
    X = gradient(mesh, u)
    if params.boundary == "absorbing":
        first = solve_geodesic(op, divergence(mesh, X), source, params)
        sink = outflow_vertices(mesh, X, source, params.outflow_cos, phi=first)
        if sink.size:
            u = solve_heat(op, source, params, absorbing=sink)
            X = gradient(mesh, u)
    if not X.valid.any():
        raise SolverError("temperature gradient vanishes everywhere")
    b = divergence(mesh, X)
    phi = solve_geodesic(op, b, source, params)
    logger.debug("geodesic field: %d vertices, max distance %.4f", len(phi), phi.max())
    if return_parts:
        return phi, op, u, X
    return phi


class GeodesicDistanceField(TransformerMixin, BaseEstimator):
    """Heat-method distance field inside a tet mesh.

    Parameters
    ----------
    time_scale : float, default=1.0
        Multiplier on the squared mean edge length giving the diffusion time.
    tol : float, default=1e-10
        Relative residual for the linear solves.
    base : {"bottom"} or sequence of int, default="bottom"
        Source set used when ``fit`` is not given one.
    base_tolerance : float, optional
        Slack for ``base="bottom"``.
    boundary : {"absorbing", "neumann"}, default="absorbing"
        Heat-step boundary treatment, see :class:`FieldParams`.

    Attributes
    ----------
    phi_ : ndarray of shape (n_vertices,)
    source_ : ndarray of int
    operator_ : SparseOperator
    temperature_ : ndarray
    gradient_ : GradientField
    """

    def __init__(self, time_scale=1.0, tol=1e-10, base="bottom", base_tolerance=None,
                 boundary="absorbing"):
        self.time_scale = time_scale
        self.tol = tol
        self.base = base
        self.base_tolerance = base_tolerance
        self.boundary = boundary

    def fit(self, X, y=None, source=None):
        if not isinstance(X, TetMesh):
            raise TypeError(f"expected a TetMesh, got {type(X).__name__}")
        params = FieldParams(self.time_scale, self.tol, self.boundary)
        if source is None:
            source = select_base_vertices(X, self.base, self.base_tolerance)
        self.source_ = _check_source(source, X.n_vertices)
        self.phi_, self.operator_, self.temperature_, self.gradient_ = geodesic_distance_field(
            X, self.source_, params, return_parts=True)
        self.mesh_ = X
        self._locator = None
        return self

    def transform(self, X):
        """Interpolated distance at query points (NaN outside the mesh)."""
        check_is_fitted(self, "phi_")
        from .locate import TetLocator

        pts = check_points(X, "X")
        if self._locator is None:
            self._locator = TetLocator(self.mesh_)
        return self._locator.interpolate(pts, self.phi_)[:, None]
