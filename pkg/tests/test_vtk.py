import math

import numpy as np

from lcfshape import vtk
from lcfshape.geometry import Tag, box_mesh


def test_mesh_round_trip(tmp_path):
    m = box_mesh((2, 3, 1), 0.5, dirichlet_dirs=(4,))
    path = tmp_path / "m.vtk"
    vtk.write_mesh(path, m, point_vectors={"u": m.nodes * 0.01}, cell_scalars={"id": np.arange(m.n_elements)})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0\n")
    assert "DATASET UNSTRUCTURED_GRID" in text and "POINT_DATA 24" in text and "CELL_DATA 6" in text
    pts, cells, types = vtk.read_cells(path)
    np.testing.assert_array_equal(pts, m.nodes)
    np.testing.assert_array_equal(cells, m.elements)
    assert np.all(types == vtk.VTK_HEXAHEDRON)


def test_positive_volume_ordering():
    # VTK hexahedron order: bottom quad counter-clockwise seen from +z, then top
    m = box_mesh((1, 1, 1), 1.0)
    x = m.nodes[m.elements[0]]
    a, b, d = x[1] - x[0], x[3] - x[0], x[4] - x[0]
    assert np.dot(np.cross(a, b), d) > 0


def test_surface(tmp_path):
    m = box_mesh((2, 2, 2), 1.0, dirichlet_dirs=(4,))
    path = tmp_path / "s.vtk"
    life = np.full(len(m.face_tag), math.inf)
    life[0] = 12.0
    vtk.write_surface(path, m, cell_scalars={"n_det": life})
    pts, cells, types = vtk.read_cells(path)
    assert len(cells) == 24 and np.all(types == vtk.VTK_QUAD)
    assert len(pts) == 26  # surface nodes of a 3x3x3 node lattice
    text = path.read_text()
    assert "SCALARS tag int 1" in text and "inf" not in text
    assert repr(vtk.INF_PLACEHOLDER) in text


def test_surface_mask(tmp_path):
    m = box_mesh((2, 2, 2), 1.0, dirichlet_dirs=(4,))
    sel = m.face_tag == Tag.DIRICHLET
    vtk.write_surface(tmp_path / "d.vtk", m, face_mask=sel)
    pts, cells, _ = vtk.read_cells(tmp_path / "d.vtk")
    assert len(cells) == 4 and len(pts) == 9
    np.testing.assert_allclose(pts[:, 2], 0.0)
