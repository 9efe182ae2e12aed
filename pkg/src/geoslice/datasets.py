"""Synthetic meshes for tests, demos and benchmarks.

Most tet meshes here are built by extruding a triangulated footprint into
prisms and splitting every prism into three tets. Using one global
vertex-index rule for the split makes neighbouring prisms agree on their
shared quad diagonals, so the result is always conforming. The box is the
exception: its cubes use the six-tet Kuhn split, which has no obtuse
dihedral angles.
"""

import numpy as np
from scipy.spatial import Delaunay

from .mesh import TetMesh, TriMesh

# Prism (0,1,2 bottom; 3,4,5 top) with vertex 0 the smallest index.
_SPLIT_A = np.array([(0, 1, 2, 5), (0, 1, 5, 4), (0, 4, 5, 3)])
_SPLIT_B = np.array([(0, 1, 2, 4), (0, 4, 2, 5), (0, 4, 5, 3)])


def regular_tetrahedron(edge=1.0):
    """One regular tetrahedron with the given edge length."""
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    pts *= edge / (2.0 * np.sqrt(2.0))
    return TetMesh(pts, [[0, 1, 2, 3]])


def unit_cube_five_tets():
    """Unit cube split into four corner tets and one central tet."""
    pts = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    tets = [(0, 1, 2, 4), (3, 1, 2, 7), (5, 1, 4, 7), (6, 2, 4, 7), (1, 2, 4, 7)]
    return TetMesh(pts, tets)


def grid_triangulation(x_range, y_range, nx, ny):
    """Structured triangulation of a rectangle, each cell split in two."""
    xs = np.linspace(x_range[0], x_range[1], nx + 1)
    ys = np.linspace(y_range[0], y_range[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return pts, tris


def _ring_points(r_in, r_out, h, center=(0.0, 0.0)):
    pts = []
    n_rings = max(1, int(np.ceil((r_out - r_in) / h)))
    radii = np.linspace(r_in, r_out, n_rings + 1)
    for k, r in enumerate(radii):
        if r <= 0:
            pts.append([0.0, 0.0])
            continue
        n = max(6, int(round(2 * np.pi * r / h)))
        ang = (np.arange(n) + 0.5 * (k % 2)) * 2 * np.pi / n
        pts.extend(np.column_stack([r * np.cos(ang), r * np.sin(ang)]).tolist())
    return np.asarray(pts) + np.asarray(center)


def _delaunay(pts, keep=None):
    tri = Delaunay(pts).simplices.astype(np.int64)
    p = pts[tri]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    ok = np.abs(area) > 1e-9 * np.max(np.abs(area))
    if keep is not None:
        ok &= keep(p.mean(axis=1))
    tri = tri[ok]
    flip = area[ok] < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    used, inv = np.unique(tri, return_inverse=True)
    return pts[used], inv.reshape(-1, 3)


def disk_triangulation(radius, h, center=(0.0, 0.0)):
    """Near-uniform triangulation of a disk from concentric point rings."""
    return _delaunay(_ring_points(0.0, radius, h, center))


def annulus_triangulation(r_in, r_out, h):
    pts = _ring_points(r_in, r_out, h)
    return _delaunay(pts, keep=lambda c: np.hypot(c[:, 0], c[:, 1]) > r_in)


def extrude(levels, tris, keep=None):
    """Stack prisms between consecutive copies of a triangulated sheet.

    Parameters
    ----------
    levels : sequence of (n, 3) arrays
        Coordinates of the sheet vertices at each level; all share the
        triangulation ``tris``.
    tris : (f, 3) int array
    keep : (len(levels) - 1, f) bool array, optional
        Which prisms to emit.

    Returns
    -------
    TetMesh
    """
    levels = [np.asarray(p, dtype=float) for p in levels]
    n = len(levels[0])
    tris = np.asarray(tris, dtype=np.int64)
    tets = []
    for k in range(len(levels) - 1):
        sel = tris if keep is None else tris[np.asarray(keep[k], dtype=bool)]
        if len(sel) == 0:
            continue
        # rotate each triangle so its smallest index comes first
        r = np.argmin(sel, axis=1)
        rot = np.stack([sel[np.arange(len(sel)), (r + s) % 3] for s in range(3)], axis=1)
        bot = rot + k * n
        prism = np.concatenate([bot, bot + n], axis=1)
        use_a = rot[:, 1] < rot[:, 2]
        tets.append(np.where(use_a[:, None, None], prism[:, _SPLIT_A], prism[:, _SPLIT_B])
                    .reshape(-1, 4))
    tets = np.concatenate(tets)
    pts = np.concatenate(levels)
    used, inv = np.unique(tets, return_inverse=True)
    return TetMesh(pts[used], inv.reshape(-1, 4))


def _planar_levels(pts2d, z_levels, warp=None):
    out = []
    for z in z_levels:
        p = np.column_stack([pts2d, np.full(len(pts2d), z)])
        out.append(warp(p) if warp is not None else p)
    return out


def make_box_mesh(size=(20.0, 20.0, 40.0), cell=2.5):
    """Axis-aligned box ``[0,sx] x [0,sy] x [0,sz]``.

    Cells are split into the six Kuhn tets around their main diagonal, which
    gives non-negative cotangent weights on cubic cells.
    """
    counts = [max(1, int(round(s / cell))) for s in size]
    axes = [np.linspace(0, s, c + 1) for s, c in zip(size, counts)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    nx, ny, nz = counts
    idx = np.arange(len(pts)).reshape(nx + 1, ny + 1, nz + 1)
    corner = idx[:-1, :-1, :-1].ravel()
    stride = np.array([(ny + 1) * (nz + 1), nz + 1, 1])
    tets = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        a = corner
        b = a + stride[perm[0]]
        c = b + stride[perm[1]]
        d = c + stride[perm[2]]
        tets.append(np.column_stack([a, b, c, d]))
    return TetMesh(pts, np.concatenate(tets))


def make_cylinder_mesh(radius=10.0, height=40.0, h=2.0, center=(0.0, 0.0)):
    """Solid vertical cylinder with its base on ``z = 0``."""
    pts, tris = disk_triangulation(radius, h, center)
    nz = max(1, int(round(height / h)))
    return extrude(_planar_levels(pts, np.linspace(0, height, nz + 1)), tris)


def make_cone_mesh(bottom_radius=5.0, height=20.0, half_angle=30.0, h=1.0):
    """Truncated cone widening upward with the given wall half-angle (degrees)."""
    pts, tris = disk_triangulation(bottom_radius, h)
    nz = max(1, int(round(height / h)))
    slope = np.tan(np.radians(half_angle))

    def widen(p):
        s = (bottom_radius + p[:, 2] * slope) / bottom_radius
        return np.column_stack([p[:, 0] * s, p[:, 1] * s, p[:, 2]])

    return extrude(_planar_levels(pts, np.linspace(0, height, nz + 1), widen), tris)


def make_two_columns_mesh(radius=3.0, gap=4.0, height=12.0, h=1.0):
    """Two disjoint vertical cylinders standing side by side along x."""
    p1, t1 = disk_triangulation(radius, h, (0.0, 0.0))
    p2, t2 = disk_triangulation(radius, h, (2 * radius + gap, 0.0))
    pts = np.concatenate([p1, p2])
    tris = np.concatenate([t1, t2 + len(p1)])
    nz = max(1, int(round(height / h)))
    return extrude(_planar_levels(pts, np.linspace(0, height, nz + 1)), tris)


def make_three_branch_mesh(branch_width=6.0, gap=6.0, depth=6.0, base_height=6.0,
                           branch_height=24.0, cell=1.5, splay=0.0):
    """A slab base carrying three towers in a row along x.

    Parameters
    ----------
    branch_width, gap, depth : float
        Tower footprint is ``branch_width x depth``; towers are ``gap`` apart.
    base_height, branch_height : float
    cell : float
        Target element size.
    splay : float
        Outward lean of the outer towers, as horizontal mm per mm of height
        above the base. ``0`` gives vertical towers.
    """
    width = 3 * branch_width + 2 * gap
    nx = max(3, int(round(width / cell)))
    ny = max(1, int(round(depth / cell)))
    # snap the grid so tower walls fall on grid lines
    unit = width / nx
    pts, tris = grid_triangulation((0, width), (0, depth), nx, ny)
    nzb = max(1, int(round(base_height / cell)))
    nzt = max(1, int(round(branch_height / cell)))
    z = np.r_[np.linspace(0, base_height, nzb + 1),
              np.linspace(base_height, base_height + branch_height, nzt + 1)[1:]]
    cx = pts[tris].mean(axis=1)[:, 0]
    starts = np.array([0.0, branch_width + gap, 2 * (branch_width + gap)])
    starts = np.round(starts / unit) * unit
    wid = np.round(branch_width / unit) * unit
    in_tower = np.zeros(len(tris), dtype=bool)
    for s in starts:
        in_tower |= (cx > s) & (cx < s + wid)
    keep = np.ones((len(z) - 1, len(tris)), dtype=bool)
    keep[nzb:] = in_tower
    mid = width / 2.0

    def lean(p):
        rise = np.clip(p[:, 2] - base_height, 0.0, None)
        side = np.clip((p[:, 0] - mid) / (mid - wid / 2.0), -1.0, 1.0)
        return np.column_stack([p[:, 0] + splay * rise * side, p[:, 1], p[:, 2]])

    warp = lean if splay else None
    return extrude(_planar_levels(pts, z, warp), tris, keep)


def icosphere(subdivisions=2):
    """Unit icosphere vertices and outward-wound triangles."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        cache = {}
        verts = list(v)

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v, f = np.array(verts), np.array(nf)
    return v, f


def make_spherical_shell_mesh(inner_radius=4.0, outer_radius=12.0, subdivisions=3,
                              n_layers=None):
    """Hollow sphere centred at the origin, layered radially."""
    dirs, tris = icosphere(subdivisions)
    if n_layers is None:
        edge = np.linalg.norm(dirs[tris[0, 0]] - dirs[tris[0, 1]]) * outer_radius
        n_layers = max(1, int(round((outer_radius - inner_radius) / edge)))
    radii = np.linspace(inner_radius, outer_radius, n_layers + 1)
    return extrude([dirs * r for r in radii], tris)


def make_disk_surface(radius=1.0, h=0.05, center=(0.0, 0.0), z=0.0):
    """Flat triangulated disk facing +z."""
    pts, tris = disk_triangulation(radius, h, center)
    return TriMesh(np.column_stack([pts, np.full(len(pts), z)]), tris)


def make_annulus_surface(inner_radius=0.5, outer_radius=1.0, h=0.05):
    pts, tris = annulus_triangulation(inner_radius, outer_radius, h)
    return TriMesh(np.column_stack([pts, np.zeros(len(pts))]), tris)


def make_two_disk_surface(radius=1.0, gap=1.0, h=0.05):
    """Two coplanar disjoint disks as one surface."""
    p1, t1 = disk_triangulation(radius, h, (0.0, 0.0))
    p2, t2 = disk_triangulation(radius, h, (2 * radius + gap, 0.0))
    pts = np.concatenate([p1, p2])
    return TriMesh(np.column_stack([pts, np.zeros(len(pts))]),
                   np.concatenate([t1, t2 + len(p1)]))


def make_disk_stack_mesh(radius=10.0, height=6.0, h=1.0):
    """Short solid cylinder: a handful of flat disk layers."""
    return make_cylinder_mesh(radius, height, h)


FIXTURES = {
    "box": make_box_mesh,
    "cylinder": make_cylinder_mesh,
    "cone": make_cone_mesh,
    "two-columns": make_two_columns_mesh,
    "three-branch": make_three_branch_mesh,
    "three-branch-fine": lambda: make_three_branch_mesh(cell=1.0),
    "shell": make_spherical_shell_mesh,
    "disk-stack": make_disk_stack_mesh,
}


def load_fixture(name):
    """Built-in tet mesh by name (see ``FIXTURES``)."""
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
