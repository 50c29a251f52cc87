import numpy as np
import pytest

from coupledvi.fem.mesh import MeshError, load_mesh, save_mesh, unit_square_mesh

TWO_TRIANGLES = """\
# unit square, two triangles
NODES
0 0 0
1 1 0
2 1 1
3 0 1
TRIANGLES
0 0 1 2
1 0 2 3
BOUNDARY
0 1 3
1 2 2
2 3 2
3 0 1
"""


def write(tmp_path, text, name="m.msh"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_two_triangle_square(tmp_path):
    mesh = load_mesh(write(tmp_path, TWO_TRIANGLES))
    assert mesh.num_nodes == 4 and len(mesh.triangles) == 2 and len(mesh.boundary_edges) == 4
    np.testing.assert_allclose(mesh.areas, [0.5, 0.5])
    assert mesh.free_nodes.tolist() == [1, 2]


def test_label_outside_range(tmp_path):
    bad = TWO_TRIANGLES.replace("0 1 3\n", "0 1 4\n")
    with pytest.raises(MeshError, match="label 4.*line 11"):
        load_mesh(write(tmp_path, bad))


def test_clockwise_triangle_fixed(tmp_path):
    cw = TWO_TRIANGLES.replace("0 0 1 2", "0 0 2 1")
    mesh = load_mesh(write(tmp_path, cw))
    assert np.all(mesh.areas > 0)


@pytest.mark.parametrize("edit, message", [
    (("2 3 2\n", ""), "unlabelled"),
    (("1 0 2 3", "1 0 2 1"), "non-manifold|degenerate|boundary"),
    (("3 0 1\n", "3 0 2\n"), "part 1"),
    (("0 1 3\n", "0 2 3\n"), "not a boundary edge"),
    (("1 0 2 3", "1 0 2 9"), "unknown node 9"),
    (("0 0 0\n", "0 0 x\n"), "line 3"),
])
def test_invalid_meshes(tmp_path, edit, message):
    with pytest.raises(MeshError, match=message):
        load_mesh(write(tmp_path, TWO_TRIANGLES.replace(*edit)))


def test_non_manifold_edge(tmp_path):
    # a third triangle on the diagonal 0-2
    text = TWO_TRIANGLES.replace("TRIANGLES\n", "4 2 0\nTRIANGLES\n").replace(
        "1 0 2 3\n", "1 0 2 3\n2 0 4 2\n")
    with pytest.raises(MeshError, match="non-manifold"):
        load_mesh(write(tmp_path, text))


def test_save_load_roundtrip(tmp_path):
    mesh = unit_square_mesh(3)
    save_mesh(mesh, tmp_path / "sq.msh")
    again = load_mesh(tmp_path / "sq.msh")
    np.testing.assert_array_equal(again.nodes, mesh.nodes)
    np.testing.assert_array_equal(again.triangles, mesh.triangles)
    np.testing.assert_array_equal(again.boundary_labels, mesh.boundary_labels)


def test_unit_square_geometry():
    mesh = unit_square_mesh(4)
    assert mesh.areas.sum() == pytest.approx(1.0)
    assert mesh.node_areas.sum() == pytest.approx(1.0)
    assert mesh.part_length(1) == pytest.approx(1.0)
    assert mesh.part_length(2) == pytest.approx(2.0)
    assert mesh.part_length(3) == pytest.approx(1.0)


def test_basis_gradients_against_affine_solve():
    mesh = unit_square_mesh(3)
    for tri, G in zip(mesh.triangles, mesh.basis_gradients):
        V = np.column_stack([np.ones(3), mesh.nodes[tri]])
        coef = np.linalg.inv(V)  # column k: coefficients of hat k
        np.testing.assert_allclose(G, coef[1:].T, atol=1e-12)


def test_gradients_of_linear_field():
    mesh = unit_square_mesh(4)
    u = 2 * mesh.nodes[:, 0] - 3 * mesh.nodes[:, 1]
    np.testing.assert_allclose(mesh.gradients(u), np.tile([2.0, -3.0], (len(mesh.triangles), 1)), atol=1e-12)
