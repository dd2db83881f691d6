import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shellthermo.mesh import Mesh2D, Mesh3D, generate_mesh, parse_mesh, read_mesh, write_mesh


def test_two_by_two_counts():
    m = generate_mesh(2, 2)
    assert (m.n_elements, m.n_nodes, len(m.boundary_nodes)) == (8, 9, 8)
    assert list(m.interior_nodes) == [4]


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9))
def test_structured_invariants(n1, n2):
    m = generate_mesh(n1, n2, (-1.0, 2.0), (0.0, 0.5))
    assert m.n_elements == 2 * n1 * n2
    assert np.all(m.signed_areas() > 0)
    assert m.signed_areas().sum() == pytest.approx(3.0 * 0.5)
    assert m.h_max == pytest.approx(math.hypot(3.0 / n1, 0.5 / n2))
    assert len(m.boundary_nodes) == 2 * (n1 + n2)


def test_resolution_too_small():
    with pytest.raises(ValueError):
        generate_mesh(1, 4)


def test_locate():
    m = generate_mesh(3, 3)
    e, bary = m.locate([0.4, 0.7])
    np.testing.assert_allclose(bary @ m.nodes[m.triangles[e]], [0.4, 0.7])
    assert np.all(bary >= -1e-12)
    with pytest.raises(ValueError):
        m.locate([1.5, 0.5])


def test_file_round_trip(tmp_path):
    m = generate_mesh(3, 2, (-0.6, 0.6), (-0.6, 0.6))
    p = tmp_path / "m.txt"
    write_mesh(m, p)
    text = p.read_text()
    assert text.splitlines()[0] == f"nodes {m.n_nodes} elements {m.n_elements}"
    back = read_mesh(p)
    assert back.same_as(m)


@pytest.mark.parametrize("text", [
    "",
    "nodes 3 elements 1\n0 0 1\n1 0 1\n0 1 1\n",                 # missing element line
    "nodes 3 elements 1\n0 0 1\n1 0 1\n0 1 1\n0 2 1\n",          # clockwise
    "nodes 3 elements 1\n0 0 1\n1 0 1\n0 1 1\n0 1 7\n",          # bad index
    "points 3\n",
])
def test_bad_mesh_files(text):
    with pytest.raises(ValueError):
        parse_mesh(text)


def test_mesh_validation():
    with pytest.raises(ValueError):
        Mesh2D(np.zeros((3, 2)), np.array([[0, 1, 3]]), np.ones(3, bool))
    with pytest.raises(ValueError):
        Mesh2D(np.zeros((3, 3)), np.array([[0, 1, 2]]), np.ones(3, bool))


def test_extrusion():
    base = generate_mesh(2, 3)
    m3 = Mesh3D(base, 4)
    assert m3.n_nodes == 5 * base.n_nodes
    assert m3.n_elements == 4 * base.n_elements
    np.testing.assert_allclose(m3.z, np.linspace(-1, 1, 5))
    N = base.n_nodes
    # every node above a base boundary node is lateral, nothing else is
    assert np.array_equal(m3.lateral, np.tile(base.boundary, 5))
    assert np.array_equal(m3.top_nodes, 4 * N + np.arange(N))
    pr = m3.prisms.reshape(4, base.n_elements, 6)
    np.testing.assert_array_equal(pr[1, :, 3:] - pr[1, :, :3], N)
    with pytest.raises(ValueError):
        Mesh3D(base, 1)
