"""Legacy ASCII VTK 3.0 writers for voxel meshes and their boundary faces."""

import numpy as np

VTK_QUAD = 9
VTK_HEXAHEDRON = 12
# VTK readers choke on "inf"; infinite lives are written as this value
INF_PLACEHOLDER = 1e300


def _fmt(values):
    values = np.where(np.isposinf(values), INF_PLACEHOLDER, values)
    return " ".join(repr(float(v)) for v in np.ravel(values))


def _write_header(fh, title, points):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(title.replace("\n", " ")[:255] + "\n")
    fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {len(points)} double\n")
    for p in points:
        fh.write(_fmt(p) + "\n")


def _write_cells(fh, cells, cell_type):
    n, k = cells.shape
    fh.write(f"CELLS {n} {n * (k + 1)}\n")
    for c in cells:
        fh.write(f"{k} " + " ".join(str(int(i)) for i in c) + "\n")
    fh.write(f"CELL_TYPES {n}\n")
    fh.write("\n".join([str(cell_type)] * n) + "\n")


def _write_data(fh, kind, n, scalars, vectors):
    if not scalars and not vectors:
        return
    fh.write(f"{kind} {n}\n")
    for name, values in scalars.items():
        values = np.asarray(values)
        dtype = "int" if np.issubdtype(values.dtype, np.integer) else "double"
        fh.write(f"SCALARS {name} {dtype} 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(_fmt([v]) if dtype == "double" else str(int(v)) for v in values) + "\n")
    for name, values in vectors.items():
        fh.write(f"VECTORS {name} double\n")
        for v in np.asarray(values):
            fh.write(_fmt(v) + "\n")


def write_mesh(path, mesh, point_vectors=None, point_scalars=None, cell_scalars=None,
               title="lcfshape voxel mesh"):
    """Hexahedral volume mesh, optionally with nodal (e.g. displacement) data."""
    with open(path, "w") as fh:
        _write_header(fh, title, mesh.nodes)
        _write_cells(fh, mesh.elements, VTK_HEXAHEDRON)
        _write_data(fh, "POINT_DATA", mesh.n_nodes, point_scalars or {}, point_vectors or {})
        _write_data(fh, "CELL_DATA", mesh.n_elements, cell_scalars or {}, {})


def write_surface(path, mesh, cell_scalars=None, face_mask=None, title="lcfshape boundary faces"):
    """Boundary quads of ``mesh`` with the face tag and optional per-face data.

    ``cell_scalars`` arrays must be aligned with the selected faces.
    """
    sel = np.ones(len(mesh.face_tag), dtype=bool) if face_mask is None else np.asarray(face_mask)
    quads = mesh.face_nodes[sel]
    used, inverse = np.unique(quads, return_inverse=True)
    data = {"tag": mesh.face_tag[sel].astype(int)}
    data.update(cell_scalars or {})
    with open(path, "w") as fh:
        _write_header(fh, title, mesh.nodes[used])
        _write_cells(fh, inverse.reshape(-1, 4), VTK_QUAD)
        _write_data(fh, "CELL_DATA", len(quads), data, {})


def read_cells(path):
    """Minimal reader returning (points, cells, cell_types) for round-trip checks."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    it = iter(tokens)
    points, cells, types = None, None, None
    for line in it:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            points = np.array([[float(x) for x in next(it).split()] for _ in range(n)])
        elif parts[0] == "CELLS":
            n = int(parts[1])
            cells = [[int(x) for x in next(it).split()][1:] for _ in range(n)]
        elif parts[0] == "CELL_TYPES":
            n = int(parts[1])
            types = [int(next(it)) for _ in range(n)]
    return points, np.array(cells), np.array(types)
