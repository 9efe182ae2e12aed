"""Readers and writers for the mesh file formats geoslice exchanges.

Supported: TetGen ``.node``/``.ele`` ASCII pairs, VTK legacy ASCII
unstructured grids made only of tetrahedra (cell type 10), and Wavefront
OBJ export (``v``/``f`` lines) for triangle meshes.
"""

from pathlib import Path

import numpy as np

from .exceptions import MeshError
from .mesh import TetMesh

FORMATS = ("tetgen-node-ele", "vtk-legacy-ascii")
VTK_TETRA = 10


def _data_lines(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshError(f"cannot open {path}: {exc.strerror or exc}") from None
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


def _tetgen_paths(path):
    path = Path(path)
    if path.suffix in (".node", ".ele"):
        base = path.with_suffix("")
    else:
        base = path
    return base.with_suffix(".node"), base.with_suffix(".ele")


def read_tetgen(path):
    """Read a TetGen ``.node``/``.ele`` pair.

    ``path`` may name either file or their common stem. Index base (0 or 1)
    is taken from the first record of the ``.node`` file.
    """
    node_path, ele_path = _tetgen_paths(path)
    nodes = _data_lines(node_path)
    eles = _data_lines(ele_path)
    try:
        n, dim = int(nodes[0][0]), int(nodes[0][1])
        if dim != 3:
            raise MeshError(f"{node_path}: expected 3D points, header says {dim}")
        rows = nodes[1:1 + n]
        if len(rows) != n:
            raise MeshError(f"{node_path}: header declares {n} points, found {len(rows)}")
        ids = np.array([int(r[0]) for r in rows])
        pts = np.array([[float(x) for x in r[1:4]] for r in rows])
        m, per = int(eles[0][0]), int(eles[0][1])
        if per != 4:
            raise MeshError(f"{ele_path}: only linear tets (4 nodes) are supported")
        erows = eles[1:1 + m]
        if len(erows) != m:
            raise MeshError(f"{ele_path}: header declares {m} tets, found {len(erows)}")
        tets = np.array([[int(x) for x in r[1:5]] for r in erows], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"parse failure in TetGen files {node_path.name}: {exc}") from None
    base = int(ids[0]) if n else 0
    if base not in (0, 1):
        raise MeshError(f"{node_path}: first index must be 0 or 1, got {base}")
    if not np.array_equal(ids, np.arange(base, base + n)):
        raise MeshError(f"{node_path}: point indices are not consecutive")
    tets = tets - base
    if tets.size and (tets.min() < 0 or tets.max() >= n):
        bad = int(np.flatnonzero((tets < 0) | (tets >= n))[0] // 4)
        raise MeshError(f"{ele_path}: index out of range in tet {bad}")
    return TetMesh(pts, tets)


def write_tetgen(path, mesh, base=0, precision=17):
    """Write ``mesh`` as ``<stem>.node`` and ``<stem>.ele``."""
    node_path, ele_path = _tetgen_paths(path)
    fmt = f"%.{precision}g"
    lines = [f"{mesh.n_vertices} 3 0 0"]
    for k, p in enumerate(mesh.vertices):
        lines.append(f"{k + base} " + " ".join(fmt % x for x in p))
    node_path.write_text("\n".join(lines) + "\n")
    lines = [f"{mesh.n_tets} 4 0"]
    for k, t in enumerate(mesh.tets):
        lines.append(f"{k + base} " + " ".join(str(int(v) + base) for v in t))
    ele_path.write_text("\n".join(lines) + "\n")
    return node_path, ele_path


def read_vtk(path):
    """Read a VTK legacy ASCII ``UNSTRUCTURED_GRID`` of tetrahedra."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshError(f"cannot open {path}: {exc.strerror or exc}") from None
    lines = text.splitlines()
    if len(lines) < 4 or not lines[0].startswith("# vtk DataFile"):
        raise MeshError(f"{path}: missing VTK legacy header")
    if lines[2].strip().upper() != "ASCII":
        raise MeshError(f"{path}: only ASCII VTK files are supported")
    tokens = " ".join(lines[3:]).split()
    pos = 0

    def take(k):
        nonlocal pos
        if pos + k > len(tokens):
            raise MeshError(f"{path}: unexpected end of file")
        out = tokens[pos:pos + k]
        pos += k
        return out

    pts = cells = types = None
    try:
        while pos < len(tokens):
            key = take(1)[0].upper()
            if key == "DATASET":
                kind = take(1)[0].upper()
                if kind != "UNSTRUCTURED_GRID":
                    raise MeshError(f"{path}: dataset {kind} is not UNSTRUCTURED_GRID")
            elif key == "POINTS":
                n = int(take(2)[0])
                pts = np.array(take(3 * n), dtype=np.float64).reshape(n, 3)
            elif key == "CELLS":
                m, size = (int(x) for x in take(2))
                cells = np.array(take(size), dtype=np.int64)
            elif key == "CELL_TYPES":
                m = int(take(1)[0])
                types = np.array(take(m), dtype=np.int64)
            elif key in ("POINT_DATA", "CELL_DATA"):
                break
            else:
                raise MeshError(f"{path}: unexpected token {key!r}")
    except ValueError as exc:
        raise MeshError(f"parse failure in {path}: {exc}") from None
    if pts is None or cells is None or types is None:
        raise MeshError(f"{path}: POINTS, CELLS and CELL_TYPES are all required")
    if np.any(types != VTK_TETRA):
        raise MeshError(f"{path}: all cells must be tetrahedra (type 10)")
    cells = cells.reshape(-1, 5)
    if np.any(cells[:, 0] != 4) or len(cells) != len(types):
        raise MeshError(f"{path}: malformed CELLS section")
    tets = cells[:, 1:]
    if tets.size and (tets.min() < 0 or tets.max() >= len(pts)):
        bad = int(np.flatnonzero((tets < 0) | (tets >= len(pts)))[0] // 4)
        raise MeshError(f"{path}: index out of range in tet {bad}")
    return TetMesh(pts, tets)


def write_vtk(path, mesh, point_data=None, precision=17):
    """Write a VTK legacy ASCII grid, optionally with scalar point data.

    ``point_data`` maps array names to per-vertex scalars and is written as
    ``POINT_DATA`` / ``SCALARS`` blocks.
    """
    fmt = f"%.{precision}g"
    out = ["# vtk DataFile Version 3.0", "geoslice tetrahedral mesh", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double"]
    out += [" ".join(fmt % x for x in p) for p in mesh.vertices]
    out.append(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}")
    out += ["4 " + " ".join(str(int(v)) for v in t) for t in mesh.tets]
    out.append(f"CELL_TYPES {mesh.n_tets}")
    out += [str(VTK_TETRA)] * mesh.n_tets
    if point_data:
        out.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [fmt % v for v in np.asarray(values, dtype=float)]
    Path(path).write_text("\n".join(out) + "\n")


def load_tet_mesh(path, format=None):
    """Load a tet mesh, inferring the format from the suffix when not given."""
    path = Path(path)
    if format is None:
        format = "vtk-legacy-ascii" if path.suffix.lower() == ".vtk" else "tetgen-node-ele"
    if format == "tetgen-node-ele":
        return read_tetgen(path)
    if format == "vtk-legacy-ascii":
        return read_vtk(path)
    raise ValueError(f"unknown mesh format {format!r}; expected one of {FORMATS}")


def write_obj(path, surface, precision=6):
    """Write a triangle mesh as Wavefront OBJ (``v`` and ``f`` lines only)."""
    fmt = f"%.{precision}f"
    out = ["v " + " ".join(fmt % x for x in p) for p in surface.vertices]
    out += ["f " + " ".join(str(int(v) + 1) for v in t) for t in surface.triangles]
    Path(path).write_text("\n".join(out) + "\n")


def read_obj(path):
    """Read ``v``/``f`` lines of an OBJ file into arrays."""
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)
